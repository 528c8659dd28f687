//! Case files and profiles bundled with the crate.

/// 3-bus case with one congested line.
pub const CASE3: &str = include_str!("../data/case3_lmbd.m");
/// 5-bus PJM case.
pub const CASE5: &str = include_str!("../data/case5_pjm.m");
/// Winter weekday hourly load factors.
pub const WINTER_WEEKDAY: &str = include_str!("../data/rts96_winter_weekday.txt");
/// The technique list used for the comparison table.
pub const TECHNIQUE_TABLE: &str = include_str!("../data/techniques.txt");
