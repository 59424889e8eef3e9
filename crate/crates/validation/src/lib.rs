//! Holds the acceptance suite (`cargo test -p qcbound-validation --test acceptance`).
