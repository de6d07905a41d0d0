//! Box-counting dimension of classic fractals and of a user image.
//!
//!     cargo run --example fractal_dimension -- [image.pgm|image.png]

use zfrac::fractal::fd_of_grid_with_series;
use zfrac::imagio::{binarize, load_gray_image, otsu_threshold};
use zfrac::synth::{sierpinski_carpet, sierpinski_triangle};
use zfrac::BinaryGrid;

fn report(name: &str, grid: &BinaryGrid) {
    let (est, series) = fd_of_grid_with_series(grid);
    println!("{name:<22} fd {:.4}  r² {:.5}  points {}", est.fd, est.r_squared, est.n_points);
    let counts: Vec<String> = series.points().iter().map(|(r, n)| format!("{r}:{n}")).collect();
    println!("{:<22} {}", "", counts.join(" "));
}

fn main() -> zfrac::Result<()> {
    report("triangle (ln3/ln2)", &sierpinski_triangle(8));
    report("carpet (ln8/ln3)", &sierpinski_carpet(5));
    report("filled square", &BinaryGrid::from_fn(128, 128, |_, _| true));
    report("single row", &BinaryGrid::from_fn(128, 128, |_, y| y == 64));

    if let Some(path) = std::env::args().nth(1) {
        let img = load_gray_image(&path)?;
        let thr = otsu_threshold(&img);
        println!("{path}: otsu threshold {thr}");
        report("image", &binarize(&img, thr));
    }
    Ok(())
}
