//! Support values: an S-procedure upper bound `β̂_{k+1}` on
//! `max η₊ᵀ Q_{k+1}⁻¹ η₊` over the funnel at node `k`, the unit disturbance
//! ball and the Lipschitz cone, followed by the dilation recursion that makes
//! the funnel invariant in discrete time.

use nalgebra::DMatrix;

use crate::conic::{solve, AffineExpr, ConeProgram, ExprMatrix, SolveStatus, EPS_PSD};
use crate::error::{Error, Result};
use crate::funnel::Funnel;
use crate::funnelopt::NodeMatrices;
use crate::linalg::{spd_inverse, symmetrize};

/// Quadratic forms over `y = (η, δp, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrices {
    /// `Mᵀ Q_{k+1}⁻¹ M`, `M = [A_cl E F]`.
    pub s0: DMatrix<f64>,
    /// `blkdiag(Q_k⁻¹, 0, 0)`.
    pub s1: DMatrix<f64>,
    /// `Nᵀ diag(−γ² I, I) N`, `N = [[C_cl, 0, G], [0, I, 0]]`.
    pub s2: DMatrix<f64>,
    /// `blkdiag(0, 0, I)`.
    pub s3: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportDual {
    pub lambda: [f64; 3],
    pub beta_hat: f64,
    pub status: SolveStatus,
}

fn inverse(q: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    spd_inverse(q).ok_or(Error::Numerical {
        node,
        reason: "shape matrix is not positive definite".into(),
    })
}

/// Assembles `S⁰..S³` at node `k` for the gain `K_k` and funnel `(Q_k, Q_{k+1})`.
pub fn assemble_s(
    m: &NodeMatrices<'_>,
    q: &DMatrix<f64>,
    q_next: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    gamma: f64,
    node: usize,
) -> Result<SMatrices> {
    let nx = m.a.nrows();
    let np = m.e.ncols();
    let nw = m.f.ncols();
    let nq = m.c.nrows();
    let dim = nx + np + nw;
    let q_inv = inverse(q, node)?;
    let q_next_inv = inverse(q_next, node + 1)?;

    let mut big_m = DMatrix::zeros(nx, dim);
    big_m.view_mut((0, 0), (nx, nx)).copy_from(&(m.a + m.b * gain));
    big_m.view_mut((0, nx), (nx, np)).copy_from(m.e);
    big_m.view_mut((0, nx + np), (nx, nw)).copy_from(m.f);
    let s0 = symmetrize(&(big_m.transpose() * q_next_inv * &big_m));

    let mut s1 = DMatrix::zeros(dim, dim);
    s1.view_mut((0, 0), (nx, nx)).copy_from(&q_inv);
    let s1 = symmetrize(&s1);

    let mut big_n = DMatrix::zeros(nq + np, dim);
    big_n.view_mut((0, 0), (nq, nx)).copy_from(&(m.c + m.d * gain));
    big_n.view_mut((0, nx + np), (nq, nw)).copy_from(m.g);
    big_n.view_mut((nq, nx), (np, np)).fill_with_identity();
    let mut weight = DMatrix::zeros(nq + np, nq + np);
    for i in 0..nq {
        weight[(i, i)] = -gamma * gamma;
    }
    for i in nq..nq + np {
        weight[(i, i)] = 1.0;
    }
    let s2 = symmetrize(&(big_n.transpose() * weight * &big_n));

    let mut s3 = DMatrix::zeros(dim, dim);
    s3.view_mut((nx + np, nx + np), (nw, nw)).fill_with_identity();
    Ok(SMatrices { s0, s1, s2, s3 })
}

/// `β̂ = min λ¹ + λ³` subject to `Σ λⁱ Sⁱ − S⁰ ⪰ 0`, `λ ≥ 0`.
pub fn solve_support_dual(s: &SMatrices, node: usize) -> Result<SupportDual> {
    let dim = s.s0.nrows();
    let mut p = ConeProgram::new();
    let l = p.add_vars(3);
    p.add_cost(l[0], 1.0);
    p.add_cost(l[2], 1.0);
    p.add_nonneg(l.iter().map(|&v| AffineExpr::var(v)).collect());
    let mut lmi = ExprMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut e = AffineExpr::constant(-s.s0[(i, j)]);
            for (v, si) in l.iter().zip([&s.s1, &s.s2, &s.s3]) {
                if si[(i, j)] != 0.0 {
                    e.add_scaled(&AffineExpr::var(*v), si[(i, j)]);
                }
            }
            if i == j {
                e.constant -= EPS_PSD;
            }
            lmi[(i, j)] = e;
        }
    }
    p.add_psd(&lmi)?;
    let res = solve(&p);
    if !res.status.is_usable() {
        return Err(Error::SupportDual {
            node,
            reason: format!("dual SDP {}", res.status),
        });
    }
    if res.status == SolveStatus::Inaccurate {
        log::warn!("support dual at node {node} solved to reduced accuracy");
    }
    let lambda = [res.x[l[0]].max(0.0), res.x[l[1]].max(0.0), res.x[l[2]].max(0.0)];
    Ok(SupportDual {
        lambda,
        beta_hat: lambda[0] + lambda[2],
        status: res.status,
    })
}

/// Support bounds `β̂_1..β̂_N` of `funnel` (shape `Q_k`, gains `K_k`).
pub fn support_bounds(
    lin: &crate::model::DiscreteLinearization,
    funnel: &Funnel,
    gamma: &[f64],
) -> Result<Vec<SupportDual>> {
    let n = funnel.horizon();
    if lin.len() != n || gamma.len() != n {
        return Err(Error::contract("support bounds need one linearization and γ per node"));
    }
    (0..n)
        .map(|k| {
            let mats = NodeMatrices::from_linearization(lin, k);
            let s = assemble_s(&mats, &funnel.q[k], &funnel.q[k + 1], &funnel.k[k], gamma[k], k)?;
            solve_support_dual(&s, k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSequence {
    /// `β_0..β_N`.
    pub beta: Vec<f64>,
    /// `β̂_1..β̂_N`.
    pub beta_hat: Vec<f64>,
    pub alpha: f64,
}

/// Continues `β_{k+1} = max(α β_k, β̂_{k+1})` from a carried `β_k`.
pub fn continue_beta(carry: f64, beta_hat: &[f64], alpha: f64) -> Vec<f64> {
    let mut prev = carry;
    beta_hat
        .iter()
        .map(|&bh| {
            prev = (alpha * prev).max(bh);
            prev
        })
        .collect()
}

/// `β_0 = 1`, `β_1 = β̂_1`, then `β_{k+1} = max(α β_k, β̂_{k+1})`.
pub fn beta_recursion(beta_hat: &[f64], alpha: f64) -> BetaSequence {
    let mut beta = vec![1.0];
    if let Some((&first, rest)) = beta_hat.split_first() {
        beta.push(first);
        beta.extend(continue_beta(first, rest, alpha));
    }
    BetaSequence {
        beta,
        beta_hat: beta_hat.to_vec(),
        alpha,
    }
}

/// Records the support values on the funnel; the certified shapes are
/// `β_k Q_k` while the gains stay fixed.
pub fn apply_support_scaling(funnel: &Funnel, seq: &BetaSequence) -> Result<Funnel> {
    if seq.beta.len() != funnel.q.len() {
        return Err(Error::contract("support sequence must cover every funnel node"));
    }
    if seq.beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::contract("support values must be nonnegative"));
    }
    let mut out = funnel.clone();
    out.beta = seq.beta.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inv_quad_form, min_eigenvalue, psd_sqrt};
    use crate::lipschitz::{node_rng, unit_ball, unit_vector};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Uniform};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    struct Owned {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        e: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        g: DMatrix<f64>,
    }

    impl Owned {
        fn mats(&self) -> NodeMatrices<'_> {
            NodeMatrices { a: &self.a, b: &self.b, f: &self.f, e: &self.e, c: &self.c, d: &self.d, g: &self.g }
        }
    }

    fn scalar_linear(a: f64, f: f64) -> Owned {
        Owned {
            a: scalar(a),
            b: scalar(0.0),
            f: scalar(f),
            e: DMatrix::zeros(1, 0),
            c: DMatrix::zeros(0, 1),
            d: DMatrix::zeros(0, 1),
            g: DMatrix::zeros(0, 1),
        }
    }

    fn random_node(seed: u64) -> (Owned, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = node_rng(seed, 0);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let mut r = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| u.sample(&mut rng));
        let l = r(3, 3);
        let q = &l * l.transpose() + DMatrix::identity(3, 3) * 0.1;
        let l2 = r(3, 3);
        let q_next = &l2 * l2.transpose() + DMatrix::identity(3, 3) * 0.2;
        let node = Owned {
            a: r(3, 3),
            b: r(3, 2),
            f: r(3, 2) * 0.2,
            e: r(3, 2) * 0.3,
            c: r(1, 3),
            d: r(1, 2),
            g: r(1, 2) * 0.1,
        };
        let k = r(2, 3) * 0.5;
        (node, q, q_next, k)
    }

    #[test]
    fn scalar_assembly_by_hand() {
        let n = scalar_linear(0.5, 0.5);
        let s = assemble_s(&n.mats(), &scalar(1.0), &scalar(1.0), &scalar(0.0), 0.0, 0).unwrap();
        assert_eq!(s.s0, DMatrix::from_element(2, 2, 0.25));
        assert_eq!(s.s1, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert_eq!(s.s3, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])));
        assert_eq!(s.s2, DMatrix::zeros(2, 2));
    }

    #[test]
    fn zero_gain_and_output_leave_only_g_in_eta_block() {
        let (mut node, q, qn, _) = random_node(5);
        node.c = DMatrix::zeros(1, 3);
        let s = assemble_s(&node.mats(), &q, &qn, &DMatrix::zeros(2, 3), 0.7, 0).unwrap();
        assert_eq!(s.s2.view((0, 0), (3, 3)).amax(), 0.0);
        // w block carries −γ² GᵀG
        let gg = node.g.transpose() * &node.g * (-0.49);
        assert!((s.s2.view((5, 5), (2, 2)) - gg).amax() < 1e-15);
    }

    #[test]
    fn s0_is_a_gram_matrix() {
        for seed in 0..20 {
            let (node, q, qn, k) = random_node(seed);
            let s = assemble_s(&node.mats(), &q, &qn, &k, 0.5, 0).unwrap();
            assert!(min_eigenvalue(&s.s0) >= -1e-10);
        }
    }

    #[test]
    fn singular_shape_is_reported() {
        let n = scalar_linear(0.5, 0.5);
        let r = assemble_s(&n.mats(), &scalar(1.0), &scalar(0.0), &scalar(0.0), 0.0, 4);
        assert!(matches!(r, Err(Error::Numerical { node: 5, .. })));
    }

    #[test]
    fn scalar_dual_is_analytic() {
        let n = scalar_linear(0.5, 0.5);
        let s = assemble_s(&n.mats(), &scalar(1.0), &scalar(1.0), &scalar(0.0), 0.0, 0).unwrap();
        let d = solve_support_dual(&s, 0).unwrap();
        assert!((d.beta_hat - 1.0).abs() < 1e-6);
        assert!((d.lambda[0] - 0.5).abs() < 1e-5);
        assert!((d.lambda[2] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn zero_reachable_set() {
        let n = scalar_linear(0.0, 0.0);
        let s = assemble_s(&n.mats(), &scalar(1.0), &scalar(1.0), &scalar(0.0), 0.0, 0).unwrap();
        let d = solve_support_dual(&s, 0).unwrap();
        assert!(d.beta_hat.abs() < 1e-7);
    }

    /// Largest sampled `η₊ᵀ Q_{k+1}⁻¹ η₊` over the primal feasible set.
    fn primal_max(node: &Owned, q: &DMatrix<f64>, qn: &DMatrix<f64>, k: &DMatrix<f64>, gamma: f64, samples: usize, seed: u64) -> f64 {
        let m = node.mats();
        let nx = q.nrows();
        let np = m.e.ncols();
        let nw = m.f.ncols();
        let root = psd_sqrt(q, 1e-12).unwrap();
        let mut rng = node_rng(seed, 1);
        let uni = Uniform::new(0.0, 1.0).unwrap();
        let a_cl = m.a + m.b * k;
        let c_cl = m.c + m.d * k;
        let mut best = 0.0f64;
        for i in 0..samples {
            let interior = i % 4 == 3;
            let mut eta = &root * unit_vector(nx, &mut rng);
            let mut w = if nw > 0 { unit_vector(nw, &mut rng) } else { DVector::zeros(0) };
            if interior {
                eta *= uni.sample(&mut rng);
                w = unit_ball(nw, &mut rng);
            }
            let dq = &c_cl * &eta + m.g * &w;
            let mut dp = if np > 0 { unit_vector(np, &mut rng) * (gamma * dq.norm()) } else { DVector::zeros(0) };
            if interior {
                dp *= uni.sample(&mut rng);
            }
            let next = &a_cl * &eta + m.e * dp + m.f * &w;
            best = best.max(inv_quad_form(qn, &next).unwrap());
        }
        best
    }

    #[test]
    fn dual_bounds_sampled_primal_scalar() {
        let n = scalar_linear(0.5, 0.5);
        let (q, qn, k) = (scalar(1.0), scalar(1.0), scalar(0.0));
        let s = assemble_s(&n.mats(), &q, &qn, &k, 0.0, 0).unwrap();
        let bh = solve_support_dual(&s, 0).unwrap().beta_hat;
        let pm = primal_max(&n, &q, &qn, &k, 0.0, 100_000, 1);
        assert!(pm <= bh + 1e-8);
        assert!(pm >= 0.95 * bh);
    }

    #[test]
    fn dual_bounds_sampled_primal_random_nodes() {
        for seed in 0..3 {
            let (node, q, qn, k) = random_node(100 + seed);
            let s = assemble_s(&node.mats(), &q, &qn, &k, 0.6, 0).unwrap();
            let bh = solve_support_dual(&s, 0).unwrap().beta_hat;
            let pm = primal_max(&node, &q, &qn, &k, 0.6, 100_000, seed);
            assert!(pm <= bh + 1e-8, "seed {seed}: {pm} > {bh}");
        }
    }

    #[test]
    fn recursion_examples() {
        assert_eq!(beta_recursion(&[0.5, 0.3], 0.9).beta, vec![1.0, 0.5, 0.45]);
        assert_eq!(beta_recursion(&[1.0; 4], 1.0).beta, vec![1.0; 5]);
        assert_eq!(beta_recursion(&[2.0, 0.1, 0.1], 0.5).beta, vec![1.0, 2.0, 1.0, 0.5]);
    }

    #[test]
    fn scaling_sets_certified_shapes() {
        let f = Funnel::from_gains(vec![DMatrix::identity(2, 2); 2], vec![DMatrix::zeros(1, 2)]).unwrap();
        let same = apply_support_scaling(&f, &beta_recursion(&[1.0], 1.0)).unwrap();
        assert_eq!(same.scaled_qs(), f.q);
        let seq = BetaSequence { beta: vec![4.0, 4.0], beta_hat: vec![4.0], alpha: 1.0 };
        let big = apply_support_scaling(&f, &seq).unwrap();
        let eta = DVector::from_vec(vec![2.0, 0.0]);
        assert!(inv_quad_form(&f.q[0], &eta).unwrap() > 1.0);
        assert!((inv_quad_form(&big.scaled_q(0), &eta).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(big.k, f.k);
    }

    proptest! {
        #[test]
        fn recursion_splits(
            bh in proptest::collection::vec(0.0f64..3.0, 2..20),
            alpha in 0.05f64..1.0,
            cut in 1usize..19,
        ) {
            let whole = beta_recursion(&bh, alpha).beta;
            let cut = cut.min(bh.len() - 1).max(1);
            let head = beta_recursion(&bh[..cut], alpha).beta;
            let tail = continue_beta(*head.last().unwrap(), &bh[cut..], alpha);
            let joined: Vec<f64> = head.into_iter().chain(tail).collect();
            prop_assert_eq!(whole, joined);
        }

        #[test]
        fn bounded_hats_keep_beta_bounded(
            bh in proptest::collection::vec(0.0f64..=1.0, 1..20),
            alpha in 0.05f64..=1.0,
        ) {
            let seq = beta_recursion(&bh, alpha);
            prop_assert!(seq.beta.iter().skip(1).all(|&b| b <= 1.0));
        }
    }
}
