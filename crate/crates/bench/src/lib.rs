//! Criterion benchmarks for the planners, learners and closed loop; see `benches/`.
