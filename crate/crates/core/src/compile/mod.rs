//! Gateway-side compilation of a ruleset into the encrypted pattern database
//! and the two-level encrypted filter.

mod db;
mod filter;

pub use db::{compile_patterns, compile_patterns_with, EncryptedRuleDb, DB_FORMAT_VERSION, DB_MAGIC};
pub use filter::{
    compile_filter, compile_filter_with, EncryptedFilter, FILTER_FORMAT_VERSION, FILTER_MAGIC,
};

use crate::crypto::{MaskSource, MaskTable, MasterKey, Prf, MAX_PAYLOAD};
use crate::rules::Rule;

/// Patterns up to this length go to the short bucket and the first-level filter `F1`.
pub const SHORT_PATTERN_MAX: usize = 3;

/// Chooses between on-the-fly PRF calls and a full mask table, by expected PRF volume.
pub(crate) fn with_masks<T>(msk: &MasterKey, rules: &[Rule], f: impl FnOnce(&dyn MaskSource) -> T) -> T {
    let prf = Prf::new(msk);
    let work: usize = rules
        .iter()
        .map(|r| r.placement_count() * r.pattern.len())
        .sum();
    if work > 256 * MAX_PAYLOAD {
        let table = MaskTable::build(&prf);
        f(&table)
    } else {
        f(&prf)
    }
}
