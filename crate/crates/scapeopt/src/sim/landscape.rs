//! Landscape construction: two sugar hills and two spice hills, one in each
//! quadrant, peak capacity 4 declining in rings to 0.

use super::{GridCell, Landscape, SimParams};
use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Peak resource capacity of a hill, in units.
pub const PEAK_CAPACITY: f64 = 4.0;

/// Build the lattice: sugar hills in the NE and SW quadrants, spice hills in
/// the NW and SE quadrants. Initial stock equals capacity; pollution is zero.
///
/// The RNG is accepted for interface uniformity with the other init
/// operations; the capacity map itself is deterministic.
pub fn init_landscape(params: &SimParams, _rng: &mut ChaCha8Rng) -> Result<Landscape> {
    if params.width < 10 || params.height < 10 {
        return Err(Error::Config(format!(
            "grid must be at least 10x10, got {}x{}",
            params.width, params.height
        )));
    }
    let (w, h) = (params.width, params.height);
    let qx = |f: f64| f * (w as f64 - 1.0);
    let qy = |f: f64| f * (h as f64 - 1.0);
    let sugar_peaks = [(qx(0.75), qy(0.25)), (qx(0.25), qy(0.75))];
    let spice_peaks = [(qx(0.25), qy(0.25)), (qx(0.75), qy(0.75))];
    // Hill radius: large enough for full 4..0 rings, small enough that the
    // two same-resource hills keep distinct peaks.
    let radius = 0.85 * (w.min(h) as f64) / 2.0;

    let mut cells = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let sugar_capacity = hill_capacity(x, y, &sugar_peaks, radius);
            let spice_capacity = hill_capacity(x, y, &spice_peaks, radius);
            cells.push(GridCell {
                sugar: sugar_capacity,
                spice: spice_capacity,
                sugar_capacity,
                spice_capacity,
                pollution: 0.0,
            });
        }
    }
    Ok(Landscape {
        width: w,
        height: h,
        cells,
        occupancy: vec![None; w * h],
    })
}

fn hill_capacity(x: usize, y: usize, peaks: &[(f64, f64)], radius: f64) -> f64 {
    let mut cap: f64 = 0.0;
    for &(px, py) in peaks {
        let d = ((x as f64 - px).powi(2) + (y as f64 - py).powi(2)).sqrt();
        let level = (PEAK_CAPACITY * (1.0 - d / radius)).ceil().clamp(0.0, PEAK_CAPACITY);
        cap = cap.max(level);
    }
    cap
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn landscape(params: &SimParams) -> Landscape {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        init_landscape(params, &mut rng).unwrap()
    }

    #[test]
    fn pollution_starts_at_zero() {
        let land = landscape(&SimParams::default());
        assert!(land.cells.iter().all(|c| c.pollution == 0.0));
    }

    #[test]
    fn sugar_peak_capacity_is_four() {
        let land = landscape(&SimParams::default());
        let peak = land
            .cells
            .iter()
            .map(|c| c.sugar_capacity)
            .fold(f64::MIN, f64::max);
        assert_eq!(peak, PEAK_CAPACITY);
        // both quadrant peaks reach it
        assert_eq!(land.cell(37, 12).sugar_capacity, PEAK_CAPACITY);
        assert_eq!(land.cell(12, 37).sugar_capacity, PEAK_CAPACITY);
        assert_eq!(land.cell(12, 12).spice_capacity, PEAK_CAPACITY);
        assert_eq!(land.cell(37, 37).spice_capacity, PEAK_CAPACITY);
    }

    #[test]
    fn initial_stock_equals_capacity() {
        let land = landscape(&SimParams::default());
        let stock: f64 = land.total_sugar();
        let cap: f64 = land.cells.iter().map(|c| c.sugar_capacity).sum();
        assert_eq!(stock, cap);
        assert!(cap > 0.0);
    }

    #[test]
    fn tiny_grid_rejected() {
        let params = SimParams {
            width: 5,
            height: 5,
            n_agents: 4,
            ..SimParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(init_landscape(&params, &mut rng).is_err());
    }
}
