use crate::diffusion::StepAlphas;
use crate::tensor::{Grid, LatentTexture};

/// Per-step texel bookkeeping: which texels some view has already written
/// this step, and the best quality seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationState {
    pub mask: Vec<bool>,
    pub quality: Vec<f32>,
}

impl AggregationState {
    pub fn new(texels: usize) -> Self {
        Self {
            mask: vec![false; texels],
            quality: vec![f32::NEG_INFINITY; texels],
        }
    }

    pub fn reset(&mut self) {
        self.mask.fill(false);
        self.quality.fill(f32::NEG_INFINITY);
    }

    pub fn visited(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Brings texels already visited this step back to noise level `t_i` and
/// leaves the rest at `z_i`:
///
/// visited: `√(ᾱ_i/ᾱ_{i−1})·z_prev + √(1 − ᾱ_i/ᾱ_{i−1})·ε`, otherwise `z_i`.
pub fn renoise_visited(
    z_prev: &LatentTexture,
    z_i: &LatentTexture,
    mask: &[bool],
    a: StepAlphas,
    eps_shared: &LatentTexture,
) -> LatentTexture {
    debug_assert!(z_prev.same_shape(z_i) && z_prev.same_shape(eps_shared));
    debug_assert_eq!(mask.len(), z_prev.cells());
    let ratio = a.alpha_bar / a.alpha_bar_prev;
    let (keep, noise) = (ratio.sqrt(), (1.0 - ratio).max(0.0).sqrt());
    let mut out = z_i.clone();
    let c = out.channels();
    for (texel, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let src = &z_prev.data()[texel * c..(texel + 1) * c];
        let eps = &eps_shared.data()[texel * c..(texel + 1) * c];
        for (k, dst) in out.cell_mut(texel).iter_mut().enumerate() {
            *dst = (keep * src[k] as f64 + noise * eps[k] as f64) as f32;
        }
    }
    out
}

/// Merges one view's texel means into `z_run`.
///
/// A texel takes the view's value where the view covers it (`counts > 0`)
/// with a strictly better quality than recorded so far; afterwards the mask
/// and quality buffers absorb the view. Returns which texels were written.
pub fn aggregate_view(
    z_run: &mut LatentTexture,
    means: &Grid,
    counts: &[f32],
    q_view: &[f32],
    state: &mut AggregationState,
) -> Vec<bool> {
    debug_assert!(z_run.same_shape(means));
    let mut written = vec![false; counts.len()];
    for texel in 0..counts.len() {
        if counts[texel] <= 0.0 {
            continue;
        }
        if q_view[texel] > state.quality[texel] {
            z_run.cell_mut(texel).copy_from_slice(means.cell(texel));
            written[texel] = true;
        }
        state.mask[texel] = true;
        state.quality[texel] = state.quality[texel].max(q_view[texel]);
    }
    written
}

/// Copies `src` into `dst` on the texels selected by `select`.
pub(crate) fn copy_selected(dst: &mut Grid, src: &Grid, select: &[bool]) {
    for (texel, _) in select.iter().enumerate().filter(|(_, &s)| s) {
        dst.cell_mut(texel).copy_from_slice(src.cell(texel));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    const A: StepAlphas = StepAlphas {
        alpha_bar: 0.25,
        alpha_bar_prev: 0.64,
    };

    #[test]
    fn empty_mask_returns_current_level() {
        let mut g = rng::stream(1, &[]);
        let (zp, zi, e) = (
            rng::normal_grid(4, 4, 2, &mut g),
            rng::normal_grid(4, 4, 2, &mut g),
            rng::normal_grid(4, 4, 2, &mut g),
        );
        assert_eq!(renoise_visited(&zp, &zi, &[false; 16], A, &e), zi);
        let same = StepAlphas {
            alpha_bar: 0.5,
            alpha_bar_prev: 0.5,
        };
        assert_eq!(renoise_visited(&zp, &zi, &[true; 16], same, &e), zp);
    }

    #[test]
    fn renoised_variance_matches_level() {
        let n = 100_000;
        let mut g = rng::stream(2, &[]);
        let z_prev = rng::normal_grid(1, n, 1, &mut g).scale(0.6);
        let eps = rng::normal_grid(1, n, 1, &mut g);
        let out = renoise_visited(&z_prev, &Grid::zeros(1, n, 1), &vec![true; n], A, &eps);
        let var = out.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n as f64;
        assert!((var / 0.75 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn aggregation_rules() {
        let mut z = Grid::filled(1, 3, 1, -5.0);
        let mut state = AggregationState::new(3);
        let means = Grid::filled(1, 3, 1, 2.0);
        let written = aggregate_view(&mut z, &means, &[4.0, 0.0, 1.0], &[-1.0, f32::NEG_INFINITY, -3.0], &mut state);
        assert_eq!(written, vec![true, false, true]);
        assert_eq!(z.data(), &[2.0, -5.0, 2.0]);
        assert_eq!(state.mask, vec![true, false, true]);

        // worse view on texel 0, better on texel 2
        let means = Grid::filled(1, 3, 1, 7.0);
        let written = aggregate_view(&mut z, &means, &[1.0, 1.0, 1.0], &[-2.0, -2.0, -2.0], &mut state);
        assert_eq!(written, vec![false, true, true]);
        assert_eq!(z.data(), &[2.0, 7.0, 7.0]);
        assert_eq!(state.quality, vec![-1.0, -2.0, -2.0]);
        assert_eq!(state.visited(), 3);
    }
}
