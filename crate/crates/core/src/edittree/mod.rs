//! Binary edit trees and a softmax classifier over them.
//!
//! Trees split a form/lemma pair around their longest common *substring*
//! (contiguous), recursing on the prefix pair and the suffix pair until no
//! character is shared. Ties between equally long substrings go to the
//! leftmost position in the form, then in the lemma, which keeps induction
//! deterministic and trees canonical.

mod classifier;
mod features;
mod tree;

pub use classifier::{
    lemmatize_with_trees, read_inventory, train_tree_classifier, tree_inventory, write_inventory,
    TreeClassifierConfig, TreeClassifierModel,
};
pub use features::extract_features;
pub use tree::{induce, longest_common_substring, EditTree};
