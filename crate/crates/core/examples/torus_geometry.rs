//! Wrapping, per-dimension distances and region relations on the torus.

use core_kge::geometry::{
    aggregate_norm, contains, region_distance, region_overlap, region_subsumes, torus_delta, wrap,
};
use core_kge::{CyclicOrthotope, NormKind};

fn main() -> core_kge::Result<()> {
    let p = wrap(&[1.25, -0.1, 3.0])?;
    println!("wrap(1.25, -0.1, 3.0) = {:?}", &p[..]);
    println!("delta to (0.2, 0.85, 0.5) = {:?}", torus_delta(&p, &[0.2, 0.85, 0.5])?);

    // a region straddling the seam at 0 in the first dimension
    let r = CyclicOrthotope::new(&[0.95, 0.5], vec![0.1, 0.2])?;
    for x in [[0.02, 0.5], [0.2, 0.5], [0.5, 0.0]] {
        let d = region_distance(&x, &r)?;
        println!(
            "x = {x:?}: inside {}  per-dim {:.3?}  L1 {:.3}  L2 {:.3}  eL2 {:.3}",
            contains(&r, &x)?,
            d,
            aggregate_norm(&d, NormKind::L1)?,
            aggregate_norm(&d, NormKind::L2)?,
            aggregate_norm(&d, NormKind::EL2)?,
        );
    }

    let inner = CyclicOrthotope::new(&[0.0, 0.55], vec![0.03, 0.1])?;
    let apart = CyclicOrthotope::new(&[0.5, 0.5], vec![0.1, 0.1])?;
    println!("r subsumes inner: {}", region_subsumes(&r, &inner)?);
    println!("r overlaps apart: {}", region_overlap(&r, &apart)?);
    Ok(())
}
