"""Cholesky factor of a Hermitian positive-definite block-Toeplitz matrix.

The generalized Schur algorithm works on a two-row generator of the
displacement ``R - Z R Z^H`` and costs ``O(M^2 b^3)`` for ``M`` blocks of
size ``b``, against ``O(M^3 b^3)`` for a dense factorization.
"""
import numpy as np
import scipy.linalg as sla

from .errors import NumericalDomainError


def block_toeplitz(T):
    """Dense matrix with blocks ``R[j, j'] = T[j' - j]`` (and ``T[j - j']^H`` below)."""
    M, b, _ = T.shape
    j = np.arange(M)
    lag = j[None, :] - j[:, None]
    blocks = np.where((lag >= 0)[:, :, None, None], T[np.abs(lag)],
                      T[np.abs(lag)].conj().transpose(0, 1, 3, 2))
    return blocks.transpose(0, 2, 1, 3).reshape(M * b, M * b)


def schur_cholesky(T):
    """Upper triangular ``U`` with ``R = U^H U`` for ``R = block_toeplitz(T)``.

    ``T`` has shape ``(M, b, b)``: ``T[l]`` is block ``(0, l)`` of ``R``.
    Raises :class:`NumericalDomainError` if ``R`` is not positive definite.
    """
    T = np.asarray(T, dtype=np.complex128)
    M, b, _ = T.shape
    n = M * b
    try:
        C = sla.cholesky(T[0], lower=False, check_finite=False)  # T0 = C^H C
    except sla.LinAlgError as exc:
        raise NumericalDomainError(f"leading block is not positive definite: {exc}")
    first = sla.solve_triangular(C, T.transpose(1, 0, 2).reshape(b, n), trans="C",
                                 check_finite=False)
    u = first.copy()
    v = first.copy()
    v[:, :b] = 0.0
    U = np.zeros((n, n), dtype=np.complex128)
    eye = np.eye(b)
    for k in range(M):
        c0 = k * b
        uk = u[:, c0:c0 + b]
        vk = v[:, c0:c0 + b]
        if k > 0:
            # block hyperbolic rotation that zeroes v's leading block
            rho = sla.solve(uk.T, vk.T, check_finite=False).T  # rho = vk uk^-1
            try:
                Ca = sla.cholesky(eye - rho.conj().T @ rho, lower=False, check_finite=False)
                Cb = sla.cholesky(eye - rho @ rho.conj().T, lower=False, check_finite=False)
            except sla.LinAlgError as exc:
                raise NumericalDomainError(
                    f"block Toeplitz matrix is not positive definite (step {k}): {exc}")
            tail_u = u[:, c0:]
            tail_v = v[:, c0:]
            nu_ = sla.solve_triangular(Ca, tail_u - rho.conj().T @ tail_v, trans="C",
                                       check_finite=False)
            nv_ = sla.solve_triangular(Cb, tail_v - rho @ tail_u, trans="C",
                                       check_finite=False)
            u[:, c0:] = nu_
            v[:, c0:] = nv_
            v[:, c0:c0 + b] = 0.0
        # make the diagonal block upper triangular with a unitary from the left
        q, _ = np.linalg.qr(u[:, c0:c0 + b])
        row = q.conj().T @ u[:, c0:]
        U[c0:c0 + b, c0:] = row
        # shift u right by one block for the next step
        u[:, b:] = u[:, :-b].copy()
        u[:, :b] = 0.0
    return np.triu(U)
