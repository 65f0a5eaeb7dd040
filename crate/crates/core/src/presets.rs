//! The two reference trees used by the simulation study.

use crate::context_tree::ContextTree;
use crate::sequences::Alphabet;

/// Order-3 binary tree `{010, 110, 00, 1}`.
pub fn scenario1_tree() -> ContextTree<f64> {
    ContextTree::from_table(
        Alphabet::BINARY,
        &[
            ("010", &[0.05, 0.95]),
            ("110", &[0.87, 0.13]),
            ("00", &[0.27, 0.73]),
            ("1", &[0.38, 0.62]),
        ],
    )
    .expect("scenario 1 tree is well formed")
}

/// Order-4 binary renewal tree `{0000, 1000, 100, 10, 1}`.
pub fn scenario2_tree() -> ContextTree<f64> {
    ContextTree::from_table(
        Alphabet::BINARY,
        &[
            ("0000", &[0.10, 0.90]),
            ("1000", &[0.50, 0.50]),
            ("100", &[0.83, 0.17]),
            ("10", &[0.25, 0.75]),
            ("1", &[0.25, 0.75]),
        ],
    )
    .expect("scenario 2 tree is well formed")
}
