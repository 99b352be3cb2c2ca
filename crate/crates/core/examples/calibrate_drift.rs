//! Fits the drift prefactor for a range of activation energies against the
//! bundled 3×3 network and prints the resulting inference metrics.
//!
//! cargo run --release --example calibrate_drift [-- <ea> ...]

use xtalk_core::crossbar_circuit::*;
use xtalk_core::thermal_network::reference_network;

fn main() -> xtalk_core::Result<()> {
    let eas: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("activation energy in eV")).collect();
    let eas = if eas.is_empty() { vec![0.4, 0.6, 0.8, 1.0] } else { eas };
    let net = reference_network();
    let opts = InferenceOptions::default();
    let early = InferenceOptions { n_cycles: 10_000, ..opts };
    println!("ea_eV,alpha,uncoupled_loss_1e4,extra_all_lrs,extra_case_a,extra_case_b");
    for ea in eas {
        let d = calibrate_drift(&net, ea, 23.0, &opts)?;
        let all = InferencePattern::all_lrs(3, 3);
        let base = run_inference(&all, &net.uncoupled(), &d, &early)?;
        let loss = 100.0 - base.final_accuracy().unwrap_or(f64::NAN);
        let extra = |p: &InferencePattern| additional_degradation(p, &net, &d, &opts);
        println!(
            "{ea},{:e},{loss:.4},{:.3},{:.3},{:.3}",
            d.alpha,
            extra(&all)?,
            extra(&InferencePattern::case_a(3, 3)?)?,
            extra(&InferencePattern::case_b(3, 3)?)?
        );
    }
    Ok(())
}
