//! Push points out of a rotated keep-out ellipse, then clear two obstacles
//! and the input box at once.

use nalgebra::{Vector2, Vector4};

use admm_ilqr::constraints::{project_timestep, EllipseShape, InputBounds};

fn main() -> admm_ilqr::Result<()> {
    let center = Vector2::new(10.0, 1.0);
    let shape = EllipseShape::new(0.4, 5.0, 2.5);
    for p in [Vector2::new(10.0, 1.5), Vector2::new(13.0, 2.0), Vector2::new(20.0, 0.0)] {
        let q = shape.project_outside(&p, &center);
        println!(
            "({:>5.2}, {:>5.2}) -> ({:>6.3}, {:>6.3})  moved {:.3}  value after {:.1e}",
            p.x,
            p.y,
            q.point.x,
            q.point.y,
            (q.point - p).norm(),
            shape.violation(&q.point, &center)
        );
    }

    let ellipses = [
        (center, shape),
        (Vector2::new(18.0, 3.0), EllipseShape::new(0.0, 4.0, 2.0)),
    ];
    let block = Vector4::new(12.0, 1.0, 0.9, -5.0);
    let z = project_timestep(0, &block, &ellipses, &InputBounds::default())?;
    println!("block {block:?}\n   -> {z:?}");
    Ok(())
}
