//! Binary masks over the flat parameter vector and the update
//! `w <- (1 - s) * w + s * eta`.

use rand::seq::index;

use crate::error::{LabError, Result};
use crate::model::{Layer, Network, ParameterStore};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn zeros(d: usize) -> Self {
        Mask { bits: vec![false; d] }
    }

    pub fn ones(d: usize) -> Self {
        Mask { bits: vec![true; d] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    fn from_support(d: usize, support: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::zeros(d);
        for i in support {
            m.bits[i] = true;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
    }

    /// FNV-1a digest of the support, for logging mask identity cheaply.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for i in self.support() {
            for b in (i as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// `floor(fraction * d)`, tolerant of representation error in `fraction`.
pub fn mask_cardinality(d: usize, fraction: f64) -> usize {
    ((fraction * d as f64) + 1e-9).floor().min(d as f64) as usize
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(LabError::Config(format!("mask fraction {fraction} outside (0, 1]")))
    }
}

/// `floor(fraction * d)` positions drawn uniformly without replacement.
pub fn mask_random(d: usize, fraction: f64, rng: &RngStream) -> Result<Mask> {
    check_fraction(fraction)?;
    let m = mask_cardinality(d, fraction);
    let picks = index::sample(&mut rng.generator(), d, m);
    Ok(Mask::from_support(d, picks))
}

/// The fixed-subset mask: the same draw as [`mask_random`], made once per
/// run and reused for every round.
pub fn mask_fixed(d: usize, fraction: f64, rng: &RngStream) -> Result<Mask> {
    mask_random(d, fraction, rng)
}

/// Ones on the `floor(fraction * d)` entries of smallest magnitude, ties
/// broken by lower index.
pub fn mask_smallest(params: &[f64], fraction: f64) -> Result<Mask> {
    check_fraction(fraction)?;
    let d = params.len();
    let m = mask_cardinality(d, fraction);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        params[a]
            .abs()
            .partial_cmp(&params[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(Mask::from_support(d, order.into_iter().take(m)))
}

/// Ones on every parameter of the dense layers in the network's final
/// fully-connected blocks (the classifier head included).
pub fn mask_fc(network: &Network) -> Result<Mask> {
    let params = network.params();
    let mut mask = Mask::zeros(params.dim());
    let mut found = false;
    for block in &network.blocks()[network.fc_start()..] {
        for layer in &block.layers {
            if let Layer::Dense(_) = layer {
                found = true;
                for id in layer.segments() {
                    for i in params.segment(id).range() {
                        mask.bits[i] = true;
                    }
                }
            }
        }
    }
    if !found {
        return Err(LabError::Config("no dense layer after the feature blocks".into()));
    }
    Ok(mask)
}

/// Ones on every segment owned by a block with 0-based index `>= first_block`.
pub fn mask_blocks_from(network: &Network, first_block: usize) -> Mask {
    let params = network.params();
    let mut mask = Mask::zeros(params.dim());
    for id in network.segments_where(|b| b >= first_block) {
        for i in params.segment(id).range() {
            mask.bits[i] = true;
        }
    }
    mask
}

/// In-place `w <- (1 - s) * w + s * eta`.
pub fn apply_reinit(params: &mut ParameterStore, mask: &Mask, eta: &[f64]) -> Result<()> {
    let d = params.dim();
    if mask.len() != d || eta.len() != d {
        return Err(LabError::Contract(format!(
            "reinit needs |s| = |eta| = d = {d}, got |s| = {}, |eta| = {}",
            mask.len(),
            eta.len()
        )));
    }
    for ((w, &s), &e) in params.flat_mut().iter_mut().zip(&mask.bits).zip(eta) {
        if s {
            *w = e;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamRole;

    fn store(values: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.push(0, 0, ParamRole::Weight, &[values.len()], 1, 1);
        s.set_flat(values).unwrap();
        s
    }

    #[test]
    fn reinit_elementwise() {
        let mut p = store(&[1., 2., 3.]);
        let s = Mask::from_bits(vec![false, true, false]);
        apply_reinit(&mut p, &s, &[9., 9., 9.]).unwrap();
        assert_eq!(p.flat(), &[1., 9., 3.]);

        apply_reinit(&mut p, &Mask::zeros(3), &[0., 0., 0.]).unwrap();
        assert_eq!(p.flat(), &[1., 9., 3.]);

        apply_reinit(&mut p, &Mask::ones(3), &[4., 5., 6.]).unwrap();
        assert_eq!(p.flat(), &[4., 5., 6.]);
    }

    #[test]
    fn reinit_length_mismatch() {
        let mut p = store(&[1., 2.]);
        assert!(matches!(
            apply_reinit(&mut p, &Mask::zeros(3), &[0.; 2]),
            Err(LabError::Contract(_))
        ));
        assert!(apply_reinit(&mut p, &Mask::zeros(2), &[0.; 3]).is_err());
    }

    #[test]
    fn random_mask_cardinality() {
        let s = RngStream::root(5);
        assert_eq!(mask_random(10, 0.2, &s).unwrap().count(), 2);
        assert_eq!(mask_random(10, 1.0, &s).unwrap(), Mask::ones(10));
        assert!(mask_random(10, 0.0, &s).is_err());
        assert!(mask_random(10, 1.5, &s).is_err());
    }

    #[test]
    fn random_masks_vary_across_streams() {
        let s = RngStream::root(5);
        let masks: std::collections::HashSet<_> =
            (0..20).map(|r| mask_random(10, 0.2, &s.derive(r)).unwrap()).collect();
        assert!(masks.len() > 10);
    }

    #[test]
    fn smallest_by_magnitude() {
        let m = mask_smallest(&[0.5, -0.1, 2.0, 0.05, -0.3], 0.4).unwrap();
        assert_eq!(m.bits(), &[false, true, false, true, false]);
        let m = mask_smallest(&[1.0; 5], 0.4).unwrap();
        assert_eq!(m.support(), vec![0, 1]);
        assert_eq!(mask_smallest(&[3., 1., 2.], 1.0).unwrap(), Mask::ones(3));
    }

    #[test]
    fn cardinality_floor() {
        assert_eq!(mask_cardinality(10, 0.2), 2);
        assert_eq!(mask_cardinality(100, 0.57), 57);
        assert_eq!(mask_cardinality(7, 0.2), 1);
        assert_eq!(mask_cardinality(4, 0.2), 0);
    }

    #[test]
    fn digest_tracks_support() {
        let a = Mask::from_bits(vec![true, false, true]);
        let b = Mask::from_bits(vec![true, true, false]);
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
