//! Preconditioned Krylov solvers with reductions that do not depend on the
//! thread count: partial sums over fixed chunks, combined in order.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CellError, Result};

const CHUNK: usize = 4096;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) fn ordered_sum(v: &[Complex64]) -> Complex64 {
    let partial: Vec<Complex64> = v.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    partial.iter().sum()
}

/// Bilinear `Σ aᵢbᵢ`.
fn dotu(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let partial: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

/// Sesquilinear `Σ conj(aᵢ)bᵢ`.
fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let partial: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum())
        .collect();
    partial.iter().sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(CHUNK).map(|x| x.iter().map(|p| p.norm_sqr()).sum()).collect();
    partial.iter().sum::<f64>().sqrt()
}

/// `y ← y + αx`
fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    y.par_iter_mut().zip(x.par_iter()).with_min_len(CHUNK).for_each(|(y, x)| *y += alpha * x);
}

/// `y ← x + βy`
fn xpby(x: &[Complex64], beta: Complex64, y: &mut [Complex64]) {
    y.par_iter_mut().zip(x.par_iter()).with_min_len(CHUNK).for_each(|(y, x)| *y = x + beta * *y);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stats {
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) struct System<'a> {
    pub apply: &'a (dyn Fn(&[Complex64], &mut [Complex64]) + Sync),
    pub precondition: &'a (dyn Fn(&[Complex64], &mut [Complex64]) + Sync),
    pub tol: f64,
    pub max_iter: usize,
}

impl System<'_> {
    fn true_residual(&self, x: &[Complex64], b: &[Complex64], bnorm: f64) -> f64 {
        let mut ax = vec![ZERO; b.len()];
        (self.apply)(x, &mut ax);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        norm(&r) / bnorm
    }

    /// Conjugate orthogonal conjugate gradients for complex-symmetric systems.
    pub fn cocg(&self, b: &[Complex64]) -> Result<(Vec<Complex64>, Stats)> {
        let len = b.len();
        let bnorm = norm(b);
        let mut x = vec![ZERO; len];
        let mut r = b.to_vec();
        let mut z = vec![ZERO; len];
        let mut q = vec![ZERO; len];
        (self.precondition)(&r, &mut z);
        let mut p = z.clone();
        let mut rho = dotu(&r, &z);
        let mut res = 1.0;
        for it in 1..=self.max_iter {
            (self.apply)(&p, &mut q);
            let alpha = rho / dotu(&p, &q);
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut r);
            res = norm(&r) / bnorm;
            if res <= self.tol {
                let residual = self.true_residual(&x, b, bnorm);
                return Ok((x, Stats { iterations: it, residual }));
            }
            (self.precondition)(&r, &mut z);
            let rho_new = dotu(&r, &z);
            let beta = rho_new / rho;
            rho = rho_new;
            xpby(&z, beta, &mut p);
        }
        Err(CellError::NoConvergence {
            iterations: self.max_iter,
            residual: res,
        })
    }

    /// Right-preconditioned BiCGStab for general systems.
    pub fn bicgstab(&self, b: &[Complex64]) -> Result<(Vec<Complex64>, Stats)> {
        let len = b.len();
        let bnorm = norm(b);
        let mut x = vec![ZERO; len];
        let mut r = b.to_vec();
        let shadow = r.clone();
        let (mut rho, mut alpha, mut omega) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        let mut v = vec![ZERO; len];
        let mut p = vec![ZERO; len];
        let mut ph = vec![ZERO; len];
        let mut sh = vec![ZERO; len];
        let mut t = vec![ZERO; len];
        let mut res = 1.0;
        for it in 1..=self.max_iter {
            let rho_new = dotc(&shadow, &r);
            if rho_new.norm() == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            // p = r + β(p − ωv)
            p.par_iter_mut()
                .zip(r.par_iter().zip(v.par_iter()))
                .with_min_len(CHUNK)
                .for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
            (self.precondition)(&p, &mut ph);
            (self.apply)(&ph, &mut v);
            alpha = rho / dotc(&shadow, &v);
            axpy(-alpha, &v, &mut r); // r now holds s
            axpy(alpha, &ph, &mut x);
            res = norm(&r) / bnorm;
            if res <= self.tol {
                let residual = self.true_residual(&x, b, bnorm);
                return Ok((x, Stats { iterations: it, residual }));
            }
            (self.precondition)(&r, &mut sh);
            (self.apply)(&sh, &mut t);
            let tt = dotc(&t, &t);
            omega = if tt.norm() > 0.0 { dotc(&t, &r) / tt } else { ZERO };
            axpy(omega, &sh, &mut x);
            axpy(-omega, &t, &mut r);
            res = norm(&r) / bnorm;
            if res <= self.tol {
                let residual = self.true_residual(&x, b, bnorm);
                return Ok((x, Stats { iterations: it, residual }));
            }
            if omega.norm() == 0.0 {
                break;
            }
        }
        Err(CellError::NoConvergence {
            iterations: self.max_iter,
            residual: res,
        })
    }
}
