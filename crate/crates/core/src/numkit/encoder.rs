//! Bidirectional tanh recurrent encoder.
//!
//! Each direction runs `h_t = tanh(Wx·e(x_t) + Wh·h_prev + b)` over the token
//! embeddings; the per-token output is `[h_fwd_t ; h_bwd_t]` and the pooled
//! output is the mean over positions. Both directions may start from a
//! caller-supplied initial state (used for label conditioning).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamSet};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, Tensor2};
use crate::error::{Error, Result};

pub const EMB: &str = "emb";
pub const FW_WX: &str = "fw.wx";
pub const FW_WH: &str = "fw.wh";
pub const FW_B: &str = "fw.b";
pub const BW_WX: &str = "bw.wx";
pub const BW_WH: &str = "bw.wh";
pub const BW_B: &str = "bw.b";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl EncoderDims {
    pub fn output_width(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `L × 2H`, forward half first.
    pub per_token: Tensor2,
    pub pooled: Vec<f64>,
}

/// Adds the encoder tensors to `params`: uniform(−scale, scale) weights and
/// zero biases.
pub fn init_encoder<R: Rng + ?Sized>(
    params: &mut ParamSet,
    dims: EncoderDims,
    scale: f64,
    rng: &mut R,
) {
    let EncoderDims {
        vocab,
        embed,
        hidden,
    } = dims;
    params.insert(EMB, Tensor2::uniform(vocab, embed, scale, rng));
    params.insert(FW_WX, Tensor2::uniform(hidden, embed, scale, rng));
    params.insert(FW_WH, Tensor2::uniform(hidden, hidden, scale, rng));
    params.insert(FW_B, Tensor2::zeros(hidden, 1));
    params.insert(BW_WX, Tensor2::uniform(hidden, embed, scale, rng));
    params.insert(BW_WH, Tensor2::uniform(hidden, hidden, scale, rng));
    params.insert(BW_B, Tensor2::zeros(hidden, 1));
}

pub fn encoder_dims(params: &ParamSet) -> EncoderDims {
    let emb = params.value(EMB);
    EncoderDims {
        vocab: emb.rows(),
        embed: emb.cols(),
        hidden: params.value(FW_WH).rows(),
    }
}

pub fn encode_sequence(tokens: &[usize], params: &ParamSet) -> Result<EncoderOutput> {
    encode_sequence_from(tokens, params, None)
}

/// Like [`encode_sequence`], with both directions starting from `h0`
/// instead of the zero state.
pub fn encode_sequence_from(
    tokens: &[usize],
    params: &ParamSet,
    h0: Option<&[f64]>,
) -> Result<EncoderOutput> {
    let dims = encoder_dims(params);
    validate_tokens(tokens, dims.vocab)?;
    let h = dims.hidden;
    if let Some(h0) = h0 {
        if h0.len() != h {
            return Err(Error::Shape {
                op: "encode_sequence (initial state)",
                left: (h, 1),
                right: (h0.len(), 1),
            });
        }
    }
    let len = tokens.len();
    let emb = params.value(EMB);
    let mut per_token = Tensor2::zeros(len, 2 * h);
    let zero = vec![0.0; h];
    let init = h0.unwrap_or(&zero);

    let mut run = |order: &mut dyn Iterator<Item = usize>, wx: &Tensor2, wh: &Tensor2, b: &Tensor2, off: usize| {
        let mut prev = init.to_vec();
        for t in order {
            let mut a = b.data().to_vec();
            matvec_acc(wx, emb.row(tokens[t]), &mut a);
            matvec_acc(wh, &prev, &mut a);
            let out = &mut per_token.row_mut(t)[off..off + h];
            for (o, v) in out.iter_mut().zip(&a) {
                *o = v.tanh();
            }
            prev.copy_from_slice(out);
        }
    };
    run(
        &mut (0..len),
        params.value(FW_WX),
        params.value(FW_WH),
        params.value(FW_B),
        0,
    );
    run(
        &mut (0..len).rev(),
        params.value(BW_WX),
        params.value(BW_WH),
        params.value(BW_B),
        h,
    );

    let mut pooled = vec![0.0; 2 * h];
    for t in 0..len {
        for (p, v) in pooled.iter_mut().zip(per_token.row(t)) {
            *p += v;
        }
    }
    let inv = 1.0 / len as f64;
    pooled.iter_mut().for_each(|p| *p *= inv);
    Ok(EncoderOutput { per_token, pooled })
}

/// Backpropagates through one encoder call. `d_per_token` and `d_pooled`
/// are the loss gradients with respect to the two outputs (either may be
/// absent). Parameter gradients go into `grads`; the return value is the
/// gradient with respect to the shared initial state, summed over both
/// directions.
pub fn encode_backward(
    tokens: &[usize],
    h0: Option<&[f64]>,
    out: &EncoderOutput,
    d_per_token: Option<&Tensor2>,
    d_pooled: Option<&[f64]>,
    params: &ParamSet,
    grads: &mut Grads,
) -> Vec<f64> {
    let dims = encoder_dims(params);
    let h = dims.hidden;
    let len = tokens.len();
    let mut d_out = match d_per_token {
        Some(d) => d.clone(),
        None => Tensor2::zeros(len, 2 * h),
    };
    if let Some(dp) = d_pooled {
        let inv = 1.0 / len as f64;
        for t in 0..len {
            for (d, g) in d_out.row_mut(t).iter_mut().zip(dp) {
                *d += g * inv;
            }
        }
    }
    let zero = vec![0.0; h];
    let init = h0.unwrap_or(&zero);
    let emb = params.value(EMB);
    let mut d_h0 = vec![0.0; h];

    for (wx_name, wh_name, b_name, off, forward) in [
        (FW_WX, FW_WH, FW_B, 0usize, true),
        (BW_WX, BW_WH, BW_B, h, false),
    ] {
        let wx = params.value(wx_name);
        let wh = params.value(wh_name);
        // positions in the order the backward pass visits them
        let visit: Vec<usize> = if forward {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let mut dwx = Tensor2::zeros(wx.rows(), wx.cols());
        let mut dwh = Tensor2::zeros(wh.rows(), wh.cols());
        let mut db = vec![0.0; h];
        let mut d_emb_rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(len);
        let mut dh_next = vec![0.0; h];
        for &t in &visit {
            let ht = &out.per_token.row(t)[off..off + h];
            let prev: &[f64] = if forward {
                if t == 0 { init } else { &out.per_token.row(t - 1)[off..off + h] }
            } else if t + 1 == len {
                init
            } else {
                &out.per_token.row(t + 1)[off..off + h]
            };
            let mut da = vec![0.0; h];
            for k in 0..h {
                let dh = d_out.row(t)[off + k] + dh_next[k];
                da[k] = dh * (1.0 - ht[k] * ht[k]);
            }
            outer_acc(&mut dwx, &da, emb.row(tokens[t]));
            outer_acc(&mut dwh, &da, prev);
            for (d, g) in db.iter_mut().zip(&da) {
                *d += g;
            }
            let mut de = vec![0.0; dims.embed];
            matvec_t_acc(wx, &da, &mut de);
            d_emb_rows.push((tokens[t], de));
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            matvec_t_acc(wh, &da, &mut dh_next);
        }
        for (d, g) in d_h0.iter_mut().zip(&dh_next) {
            *d += g;
        }
        grads.get_mut(wx_name).add_assign(&dwx);
        grads.get_mut(wh_name).add_assign(&dwh);
        for (d, g) in grads.get_mut(b_name).data_mut().iter_mut().zip(&db) {
            *d += g;
        }
        let g_emb = grads.get_mut(EMB);
        for (tok, de) in d_emb_rows {
            for (d, g) in g_emb.row_mut(tok).iter_mut().zip(&de) {
                *d += g;
            }
        }
    }
    d_h0
}

pub(crate) fn validate_tokens(tokens: &[usize], vocab: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&id) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(Error::Vocab { id, size: vocab });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn params(seed: u64) -> ParamSet {
        let mut p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_encoder(
            &mut p,
            EncoderDims {
                vocab: 9,
                embed: 4,
                hidden: 3,
            },
            0.5,
            &mut rng,
        );
        for b in [FW_B, BW_B] {
            for (i, v) in p.value_mut(b).data_mut().iter_mut().enumerate() {
                *v = 0.1 * i as f64 - 0.05;
            }
        }
        p
    }

    #[test]
    fn single_token_without_recurrence_is_embedding_through_tanh() {
        let mut p = params(1);
        p.value_mut(FW_WH).fill(0.0);
        p.value_mut(BW_WH).fill(0.0);
        let out = encode_sequence(&[4], &p).unwrap();
        let e = p.value(EMB).row(4);
        for (wx, b, off) in [(FW_WX, FW_B, 0), (BW_WX, BW_B, 3)] {
            let mut a = p.value(b).data().to_vec();
            matvec_acc(p.value(wx), e, &mut a);
            for k in 0..3 {
                assert_eq!(out.per_token.get(0, off + k), a[k].tanh());
            }
        }
        assert_eq!(out.pooled, out.per_token.row(0).to_vec());
    }

    #[test]
    fn deterministic_bitwise() {
        let p = params(2);
        let a = encode_sequence(&[1, 5, 2, 8], &p).unwrap();
        let b = encode_sequence(&[1, 5, 2, 8], &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tied_directions_mirror_under_reversal() {
        let mut p = params(3);
        for (src, dst) in [(FW_WX, BW_WX), (FW_WH, BW_WH), (FW_B, BW_B)] {
            let v = p.value(src).clone();
            *p.value_mut(dst) = v;
        }
        let seq = [3, 1, 7, 2, 5];
        let rev: Vec<usize> = seq.iter().rev().copied().collect();
        let a = encode_sequence(&seq, &p).unwrap();
        let b = encode_sequence(&rev, &p).unwrap();
        for k in 0..3 {
            assert!((a.pooled[k] - b.pooled[k + 3]).abs() < 1e-15);
            assert!((a.pooled[k + 3] - b.pooled[k]).abs() < 1e-15);
        }
        let pal = [3, 1, 7, 1, 3];
        let rev_pal: Vec<usize> = pal.iter().rev().copied().collect();
        let c = encode_sequence(&pal, &p).unwrap();
        let d = encode_sequence(&rev_pal, &p).unwrap();
        assert_eq!(c.pooled, d.pooled);
        for k in 0..3 {
            assert!((c.pooled[k] - c.pooled[k + 3]).abs() < 1e-15);
        }
    }

    #[test]
    fn pooled_is_mean_of_rows() {
        let p = params(4);
        let out = encode_sequence(&[1, 2, 3], &p).unwrap();
        for c in 0..6 {
            let mean = (0..3).map(|t| out.per_token.get(t, c)).sum::<f64>() / 3.0;
            assert!((out.pooled[c] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        let p = params(5);
        assert!(matches!(encode_sequence(&[], &p), Err(Error::EmptyInput)));
        assert!(matches!(
            encode_sequence(&[1, 9], &p),
            Err(Error::Vocab { id: 9, size: 9 })
        ));
        assert!(encode_sequence_from(&[1], &p, Some(&[0.0; 2])).is_err());
    }
}
