//! Human-readable summary. Every number printed here is a field of the
//! certificate file.

use std::fmt::Write;

use crate::pipeline::CertificateFile;

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn opt(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    }
}

pub fn summary(c: &CertificateFile) -> String {
    let mut s = String::new();
    let m = &c.model;
    let _ = writeln!(
        s,
        "kgdecay {} (schema {}), seed {}",
        c.tool_version, c.schema_version, c.seed
    );
    let stages: Vec<String> = c.stages.iter().map(|st| st.to_string()).collect();
    let _ = writeln!(s, "stages: {}", stages.join(", "));
    let _ = writeln!(s);
    let _ = writeln!(s, "model");
    let _ = writeln!(s, "  period T          {:.6e}", m.period);
    let _ = writeln!(s, "  mean damping beta {:.6e}", m.beta);
    let _ = writeln!(s, "  m0                {:.6e}", m.m0);
    match m.epsilon {
        Some(e) => {
            let _ = writeln!(s, "  epsilon           {e:.6e} ({})", m.epsilon_setting);
        }
        None => {
            let _ = writeln!(s, "  epsilon           none ({})", m.epsilon_setting);
        }
    }
    let a = &m.assumptions;
    let _ = writeln!(
        s,
        "  b range           [{:.6e}, {:.6e}], strictly positive: {}",
        a.b_min, a.b_max, a.b_strictly_positive
    );
    for u in &a.unchecked {
        let _ = writeln!(s, "  unchecked         {u}");
    }
    let l = &c.liouville;
    let _ = writeln!(
        s,
        "\nliouville check    {} ({} samples, max relative error {:.3e})",
        verdict(l.passed),
        l.samples.len(),
        l.max_relative_error
    );

    if let Some(t) = &c.threshold {
        let _ = writeln!(s, "\nthreshold         {}", verdict(t.passed));
        let _ = writeln!(s, "  N                 {:.6e}", t.result.n);
        let _ = writeln!(
            s,
            "  search sup        {:.6e} (target {:.6e})",
            t.result.sup_value, t.result.target
        );
        let _ = writeln!(s, "  verification sup  {:.6e}", t.result.verification_sup);
        let _ = writeln!(
            s,
            "  max |M| on window {:.6e} (bound {:.6e})",
            t.window_bound.max_norm, t.window_bound.bound
        );
    }
    if let Some(ct) = &c.contraction {
        let cert = &ct.certificate;
        let _ = writeln!(s, "\ncontraction       {}", verdict(ct.passed));
        let _ = writeln!(
            s,
            "  N                 {:.6e} (from {})",
            cert.n, ct.n_source
        );
        let _ = writeln!(s, "  k                 {}", cert.k);
        let _ = writeln!(s, "  c1                {:.6e}", cert.c1);
        let _ = writeln!(
            s,
            "  c1 refined        {:.6e} (change {:.3e})",
            ct.refinement.c1_refined, ct.refinement.change
        );
        let _ = writeln!(s, "  delta0            {:.6e}", cert.delta0);
        let _ = writeln!(s, "  delta1            {:.6e}", cert.delta1);
        let _ = writeln!(s, "  C                 {:.6e}", cert.c);
        let _ = writeln!(s, "  max spectral rad. {:.6e}", ct.rho_max);
    }
    if let Some(e) = &c.epsilon {
        let b = &e.bound;
        let _ = writeln!(s, "\nepsilon           {}", verdict(e.passed));
        let _ = writeln!(
            s,
            "  epsilon_max       {:.6e}{}",
            b.epsilon_max,
            if b.vacuous { " (vacuous)" } else { "" }
        );
        let _ = writeln!(s, "  W argument        {:.6e}", b.w_argument);
        for a in &b.audit {
            let _ = writeln!(s, "  audit xi={:.6e}  ratio {:.6e}", a.xi, a.ratio);
        }
        let v = &b.single_beta_variant;
        let _ = writeln!(
            s,
            "  beta-exponent variant {:.6e} (sound: {})",
            v.epsilon, v.sound
        );
        if let Some(p) = &e.perturbed {
            let _ = writeln!(
                s,
                "  applied epsilon   {:.6e} (within bound: {})",
                p.epsilon, p.within_bound
            );
            let _ = writeln!(
                s,
                "  max |M_eps^k|     {:.6e} (ok: {})",
                p.contraction.worst, p.contraction.ok
            );
            let _ = writeln!(
                s,
                "  max |M_eps| win.  {:.6e} (bound {:.6e})",
                p.window_bound.max_norm, p.window_bound.bound
            );
            if let Some(sigma) = p.sigma {
                let _ = writeln!(s, "  sigma             {sigma:.6e}");
            }
            let held = p.gronwall.iter().filter(|g| g.holds).count();
            let _ = writeln!(
                s,
                "  gronwall samples  {held}/{} dominated",
                p.gronwall.len()
            );
        }
    }
    if let Some(d) = &c.decay {
        let _ = writeln!(
            s,
            "\ndecay             {} ({:?})",
            verdict(d.passed),
            d.verdict
        );
        let _ = writeln!(
            s,
            "  horizon           {:.6e} ({} points)",
            d.t_end, d.time_points
        );
        let _ = writeln!(
            s,
            "  certified rate    {:.6e} ({})",
            d.certified_rate, d.constants.rate_symbol
        );
        let _ = writeln!(s, "  prefactor         {:.6e}", d.certified_prefactor);
        let _ = writeln!(s, "  max sup/bound     {:.6e}", d.max_sup_over_bound);
        let _ = writeln!(s, "  final sup norm    {:.6e}", d.final_sup_norm);
        if let Some(f) = &d.fit {
            let _ = writeln!(
                s,
                "  fitted rate       {:.6e} (residual {:.3e}, {} points)",
                f.rate, f.residual, f.points
            );
        }
        let _ = writeln!(s, "  rate consistent   {}", opt(d.rate_consistent));
        let _ = writeln!(
            s,
            "  C e^(-rate t) form {}",
            if d.uniform_form_holds {
                "holds"
            } else {
                "violated"
            }
        );
        let _ = writeln!(s, "  inner envelope    {}", opt(d.inner_envelope_holds));
        let _ = writeln!(s, "  outer envelope    {}", opt(d.outer_envelope_holds));
        if let Some(g) = d.final_gamma {
            let _ = writeln!(s, "  final gamma       {g:.6e}");
        }
        for line in &d.constants.inequalities {
            let _ = writeln!(s, "  {line}");
        }
    }
    let _ = writeln!(
        s,
        "\noverall           {} (exit {})",
        verdict(c.all_passed),
        c.exit_code
    );
    s
}
