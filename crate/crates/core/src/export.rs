//! CSV writers for the run artefacts. Floats use `{:.16e}`, rows end in LF.

use std::io::Write;

use crate::certify::DecayReport;
use crate::error::Result;
use crate::highfreq::ThresholdStep;
use crate::monodromy::MonodromySample;

/// Round-trippable scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// `t, xi, re_eig1, im_eig1, re_eig2, im_eig2, rho, norm, class`.
pub fn write_monodromy_scan<W: Write>(out: W, samples: &[MonodromySample]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "t", "xi", "re_eig1", "im_eig1", "re_eig2", "im_eig2", "rho", "norm", "class",
    ])?;
    for s in samples {
        let (a, b) = s.eigenvalues;
        w.write_record([
            fmt_f64(s.t),
            fmt_f64(s.xi),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(b.re),
            fmt_f64(b.im),
            fmt_f64(s.spectral_radius),
            fmt_f64(s.norm),
            s.class.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `N_candidate, sup_value, accepted`.
pub fn write_threshold_trace<W: Write>(out: W, trace: &[ThresholdStep]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["N_candidate", "sup_value", "accepted"])?;
    for s in trace {
        w.write_record([
            fmt_f64(s.n_candidate),
            fmt_f64(s.sup_value),
            s.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, sup_norm, bound, inner_sup, outer_sup`.
pub fn write_decay<W: Write>(out: W, report: &DecayReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["t", "sup_norm", "bound", "inner_sup", "outer_sup"])?;
    for i in 0..report.time_grid.len() {
        w.write_record([
            fmt_f64(report.time_grid[i]),
            fmt_f64(report.sup_norm_curve[i]),
            fmt_f64(report.bound_curve[i]),
            fmt_f64(report.inner_curve[i]),
            fmt_f64(report.outer_curve[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
