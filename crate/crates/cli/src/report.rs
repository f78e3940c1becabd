use std::fmt::Write;

use idlertomo_core::{ReconstructionMethod, ReconstructionResult};

fn stderr_suffix(x: Option<f64>) -> String {
    match x {
        Some(s) if s.is_finite() => format!(" ± {s:.2e}"),
        Some(_) => " ± unbounded".to_string(),
        None => String::new(),
    }
}

/// Plain-text summary of a reconstruction.
pub fn render(r: &ReconstructionResult) -> String {
    let mut s = String::new();
    let method = match r.method {
        ReconstructionMethod::FringeExtraction => "fringe extraction",
        ReconstructionMethod::Mle => "least-squares likelihood fit",
    };
    let _ = writeln!(s, "method      {method}");
    let _ = writeln!(s, "P_H         {:.6}{}", r.params.p_h(), stderr_suffix(r.stderr.map(|e| e.p_h)));
    let _ = writeln!(s, "xi (rad)    {:.6}{}", r.params.xi(), stderr_suffix(r.stderr.map(|e| e.xi)));
    let _ = writeln!(s, "purity      {:.6}{}", r.params.purity(), stderr_suffix(r.stderr.map(|e| e.purity)));
    if let Some(f) = &r.fit_h {
        let _ = writeln!(s, "V_H         {:.6} ± {:.2e}", f.visibility, f.visibility_stderr);
    }
    if let Some(f) = &r.fit_v {
        let _ = writeln!(s, "V_V         {:.6} ± {:.2e}", f.visibility, f.visibility_stderr);
    }
    let _ = writeln!(s, "cost        {:.6e}", r.cost);
    if let Some(n) = r.evaluations {
        let _ = writeln!(s, "evaluations {n}");
    }
    if let Some(f) = r.fidelity_vs_reference {
        let _ = writeln!(s, "fidelity    {f:.6}");
    }
    let flags: Vec<&str> = [
        (r.flags.p_h_clamped, "p_h_clamped"),
        (r.flags.purity_clamped, "purity_clamped"),
        (r.flags.purity_undefined, "purity_undefined"),
        (r.flags.xi_undefined, "xi_undefined"),
    ]
    .into_iter()
    .filter_map(|(on, name)| on.then_some(name))
    .collect();
    if !flags.is_empty() {
        let _ = writeln!(s, "flags       {}", flags.join(", "));
    }
    let m = r.rho.matrix();
    let _ = writeln!(s, "rho (H, V basis)");
    for i in 0..2 {
        let row: Vec<String> = (0..2)
            .map(|j| format!("{:+.4}{:+.4}i", m[(i, j)].re, m[(i, j)].im))
            .collect();
        let _ = writeln!(s, "  [{}]", row.join("  "));
    }
    s
}
