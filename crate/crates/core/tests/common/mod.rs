#![allow(dead_code, clippy::excessive_precision)]

use plume_core::observation::TimeGrid;
use plume_core::{KernelOptions, ParticleProperties, PlumeModel, SourceSite, StabilityClass, WindSeries};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let (f1, f2) = (f(c - h * XGK[k]), f(c + h * XGK[k]));
        kronrod += WGK[k] * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature by interval bisection.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(f, lo, hi);
        if err <= tol * val.abs().max(1e-300) || depth > 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

pub fn inert() -> ParticleProperties {
    ParticleProperties::new(1000.0, 0.0, 0.0, 0.0).unwrap()
}

pub fn steady_wind(grid: TimeGrid, u: (f64, f64)) -> WindSeries {
    WindSeries::new(grid, vec![u.0; grid.len()], vec![u.1; grid.len()]).unwrap()
}

/// Wind that turns slowly through a half circle over the grid.
pub fn turning_wind(grid: TimeGrid, speed: f64) -> WindSeries {
    let n = grid.len();
    let angle = |j: usize| std::f64::consts::PI * j as f64 / n as f64;
    WindSeries::new(
        grid,
        (0..n).map(|j| speed * angle(j).cos()).collect(),
        (0..n).map(|j| speed * angle(j).sin()).collect(),
    )
    .unwrap()
}

pub fn two_source_model(wind: WindSeries, particle: ParticleProperties) -> PlumeModel {
    let sites = vec![
        SourceSite::new("west", -150.0, 20.0, 5.0).unwrap(),
        SourceSite::new("east", 80.0, -40.0, 0.0).unwrap(),
    ];
    PlumeModel::new(sites, wind, particle, StabilityClass::D, KernelOptions::default()).unwrap()
}
