use std::fmt::Write;

use crate::analytic::{summarize, SpeedupParams};
use crate::error::Result;

/// The six closed-form quantities for one point, one per row, 4 decimals.
pub fn analytic_report(params: &SpeedupParams) -> Result<String> {
    let s = summarize(params)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "alpha={} gamma={} n_layers={} exit_depth={} stages={}",
        params.alpha,
        params.gamma,
        params.n_layers,
        params.exit_depth,
        params.n_stages()
    );
    let rows = [
        ("expected_accept_len", s.expected_accept_len),
        ("overall_acceptance", s.overall_acceptance),
        ("sd_gain", s.sd_gain),
        ("eesd_speedup", s.eesd_speedup),
        ("ppsd_speedup", s.ppsd_speedup),
        ("lambda", s.lambda),
    ];
    for (name, value) in rows {
        let _ = writeln!(out, "{name:<20} {value:>10.4}");
    }
    Ok(out)
}
