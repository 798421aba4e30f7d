//! Phase portraits of the linear and sigmoidal two-weight problems, written as SVG.
//!
//! ```bash
//! cargo run --example sigmoid_portrait -- /tmp/portraits
//! ```

use std::path::PathBuf;

use overparam::portrait::{phase_portrait, write_portrait_svg, Bounds, PortraitKind};
use overparam::sigmoid::{origin_linearization, separatrix_deviation, SEPARATRIX_CHECK_POINTS};
use overparam::IntegratorConfig;

fn main() -> overparam::Result<()> {
    let outdir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&outdir)?;

    let lin = origin_linearization()?;
    println!("unstable eigenpair at the origin: {:.4} along {:?}", lin.unstable.value, lin.unstable.vector);
    println!("stable eigenpair at the origin:   {:.4} along {:?}", lin.stable.value, lin.stable.vector);

    let cfg = IntegratorConfig { grad_tol: f64::MIN_POSITIVE, ..IntegratorConfig::default() };
    let dev = separatrix_deviation(&cfg, &SEPARATRIX_CHECK_POINTS)?;
    println!("traced separatrix vs closed form: {dev:.2e}");

    for kind in [PortraitKind::Linear, PortraitKind::Sigmoid] {
        let p = phase_portrait(kind, Bounds::square(3.0), (21, 21), true)?;
        let path = outdir.join(format!("portrait_{}.svg", kind.as_str()));
        write_portrait_svg(&p, &path)?;
        println!("wrote {} ({} arrows, {} overlays)", path.display(), p.samples.len(), p.overlays.len());
    }
    Ok(())
}
