"""Sparse operator construction on tensor-product spaces.

All operators are scipy CSR matrices with sorted indices and summed
duplicates, so a given construction is bit-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BadFactor, DimensionMismatch
from .spaces import AtomLevels, Dicke, Fock, HilbertSpace

HERMITICITY_TOL = 1e-12


def _canonical(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=complex)
    m.sum_duplicates()
    m.sort_indices()
    return m


def identity(dim: int) -> sp.csr_matrix:
    return sp.identity(dim, dtype=complex, format="csr")


def embed_factor(space: HilbertSpace, which_factor: int, local) -> sp.csr_matrix:
    """Embed an operator acting on one factor by identity on all others."""
    dims = space.factor_dims
    local = _canonical(local)
    if local.shape != (dims[which_factor], dims[which_factor]):
        raise DimensionMismatch(
            f"local operator shape {local.shape} != factor dimension {dims[which_factor]}"
        )
    pre = int(np.prod(dims[:which_factor], dtype=np.int64)) if which_factor else 1
    post = int(np.prod(dims[which_factor + 1 :], dtype=np.int64))
    out = local
    if pre > 1:
        out = sp.kron(identity(pre), out, format="csr")
    if post > 1:
        out = sp.kron(out, identity(post), format="csr")
    return _canonical(out)


def single_atom_operator(
    space: HilbertSpace, which_factor: int, atom: int, local
) -> sp.csr_matrix:
    """Embed a d x d single-atom operator at position `atom` of an AtomLevels factor."""
    factor = space.factors[which_factor]
    if not isinstance(factor, AtomLevels):
        raise BadFactor(f"factor {which_factor} is not AtomLevels")
    if not 0 <= atom < factor.n:
        raise BadFactor(f"atom index {atom} out of range for n={factor.n}")
    local = _canonical(local)
    if local.shape != (factor.d, factor.d):
        raise DimensionMismatch(f"local shape {local.shape} != atom dimension {factor.d}")
    op = local
    if atom > 0:
        op = sp.kron(identity(factor.d**atom), op, format="csr")
    tail = factor.n - atom - 1
    if tail > 0:
        op = sp.kron(op, identity(factor.d**tail), format="csr")
    return embed_factor(space, which_factor, op)


def level_transition(d: int, a: int, b: int) -> sp.csr_matrix:
    """|a><b| on a d-level atom (0-based level indices)."""
    m = sp.csr_matrix(([1.0 + 0j], ([a], [b])), shape=(d, d))
    return _canonical(m)


def dicke_spin_matrices(S: float) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """(S_x, S_y, S_z) in the |S, m> basis ordered m = S ... -S."""
    dim = round(2 * S) + 1
    m = S - np.arange(dim)  # m value of each basis state
    sz = sp.diags(m.astype(complex), format="csr")
    # S_+|S,m> = sqrt(S(S+1) - m(m+1)) |S,m+1>; row of m+1 sits one above row of m
    raise_amp = np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1)).astype(complex)
    sp_plus = sp.diags(raise_amp, 1, shape=(dim, dim), format="csr")
    sm = sp_plus.conj().T.tocsr()
    sx = _canonical((sp_plus + sm) / 2)
    sy = _canonical((sp_plus - sm) / (2j))
    return sx, sy, _canonical(sz)


def collective_spin_ops(
    space: HilbertSpace, which_factor: int = 0, levels: tuple[int, int] = (0, 1)
) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Collective (S_x, S_y, S_z) hosted on a Dicke or AtomLevels factor.

    On AtomLevels the two designated internal levels play the role of
    |1> and |2>: S_z = (1/2) sum_j (|1><1| - |2><2|) etc., embedded by
    identity on every other factor.
    """
    factor = space.factors[which_factor]
    if isinstance(factor, Dicke):
        sx, sy, sz = dicke_spin_matrices(factor.S)
        return tuple(embed_factor(space, which_factor, m) for m in (sx, sy, sz))
    if isinstance(factor, AtomLevels):
        up, dn = levels
        if factor.d < 2 or up == dn or max(up, dn) >= factor.d:
            raise BadFactor(f"levels {levels} invalid for {factor}")
        p_up = level_transition(factor.d, up, up)
        p_dn = level_transition(factor.d, dn, dn)
        flip = level_transition(factor.d, up, dn)  # |1><2|
        sx_loc = (flip + flip.conj().T) / 2
        sy_loc = 1j * (flip.conj().T - flip) / 2
        sz_loc = (p_up - p_dn) / 2
        dim = space.dimension
        out = []
        for loc in (sx_loc, sy_loc, sz_loc):
            total = sp.csr_matrix((dim, dim), dtype=complex)
            for j in range(factor.n):
                total = total + single_atom_operator(space, which_factor, j, loc)
            out.append(_canonical(total))
        return tuple(out)
    raise BadFactor(f"factor {factor} cannot host collective spin operators")


def boson_ops(space: HilbertSpace, which_factor: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(a, a_dagger) of a Fock factor, truncated at its n_max."""
    factor = space.factors[which_factor]
    if not isinstance(factor, Fock):
        raise BadFactor(f"factor {factor} is not a Fock mode")
    n = np.arange(1, factor.n_max + 1)
    a_loc = sp.diags(np.sqrt(n).astype(complex), 1, format="csr")
    a = embed_factor(space, which_factor, a_loc)
    return a, _canonical(a.conj().T)


def number_diagonal(space: HilbertSpace, which_factor: int) -> np.ndarray:
    """Diagonal of the photon-number operator embedded in the full space."""
    factor = space.factors[which_factor]
    if not isinstance(factor, Fock):
        raise BadFactor(f"factor {factor} is not a Fock mode")
    diag = np.zeros(space.dimension)
    dims = space.factor_dims
    pre = int(np.prod(dims[:which_factor], dtype=np.int64)) if which_factor else 1
    post = int(np.prod(dims[which_factor + 1 :], dtype=np.int64))
    local = np.arange(factor.n_max + 1, dtype=float)
    diag = np.tile(np.repeat(local, post), pre)
    return diag


def top_fock_diagonal(space: HilbertSpace, which_factor: int) -> np.ndarray:
    """Diagonal projector onto the highest retained Fock level."""
    factor = space.factors[which_factor]
    if not isinstance(factor, Fock):
        raise BadFactor(f"factor {factor} is not a Fock mode")
    dims = space.factor_dims
    pre = int(np.prod(dims[:which_factor], dtype=np.int64)) if which_factor else 1
    post = int(np.prod(dims[which_factor + 1 :], dtype=np.int64))
    local = np.zeros(factor.n_max + 1)
    local[-1] = 1.0
    return np.tile(np.repeat(local, post), pre)


@dataclass(frozen=True)
class PairSpinOps:
    """S^(+/-)_k = S^L_k +/- S^R_k for the two Dicke factors of a space."""

    plus_x: sp.csr_matrix
    minus_x: sp.csr_matrix
    plus_y: sp.csr_matrix
    minus_y: sp.csr_matrix
    plus_z: sp.csr_matrix
    minus_z: sp.csr_matrix


def dicke_factor_indices(space: HilbertSpace) -> tuple[int, int]:
    idx = [i for i, f in enumerate(space.factors) if isinstance(f, Dicke)]
    if len(idx) != 2:
        raise BadFactor(f"space has {len(idx)} Dicke factors, need exactly 2")
    return idx[0], idx[1]


def pair_spin_ops(space: HilbertSpace) -> PairSpinOps:
    left, right = dicke_factor_indices(space)
    l_ops = collective_spin_ops(space, left)
    r_ops = collective_spin_ops(space, right)
    fields = {}
    for k, (lo, ro) in zip("xyz", zip(l_ops, r_ops)):
        fields[f"plus_{k}"] = _canonical(lo + ro)
        fields[f"minus_{k}"] = _canonical(lo - ro)
    return PairSpinOps(**fields)


def check_hermitian(mat: sp.spmatrix, tol: float = HERMITICITY_TOL) -> bool:
    diff = (mat - mat.conj().T).tocoo()
    scale = max(np.max(np.abs(mat.data)) if mat.nnz else 0.0, 1e-300)
    return (np.max(np.abs(diff.data)) if diff.nnz else 0.0) < tol * scale


class PhasedOperator:
    """H(t) = sum_j amp_j * exp(i * freq_j * t) * O_j on a fixed sparsity pattern.

    The constant sparse matrices O_j are merged into one CSR pattern at
    construction; assembling H(t) only rewrites the shared data array, so
    repeated evaluation inside an integrator never re-sparsifies.
    """

    def __init__(self, space: HilbertSpace, terms):
        self.space = space
        self.terms = [(complex(a), float(w), _canonical(o)) for a, w, o in terms]
        dim = space.dimension
        for _, _, o in self.terms:
            if o.shape != (dim, dim):
                raise DimensionMismatch(f"term shape {o.shape} != space dimension {dim}")
        if not self.terms:
            self.terms = [(0.0 + 0j, 0.0, sp.csr_matrix((dim, dim), dtype=complex))]
        pattern = _canonical(sum(abs(o) for _, _, o in self.terms))
        self.indptr = pattern.indptr
        self.indices = pattern.indices
        self.nnz = pattern.nnz
        rows = np.repeat(np.arange(dim, dtype=np.int64), np.diff(pattern.indptr))
        pattern_keys = rows * dim + pattern.indices.astype(np.int64)
        pos_chunks, val_chunks, term_ids = [], [], []
        for j, (_, _, o) in enumerate(self.terms):
            orows = np.repeat(np.arange(dim, dtype=np.int64), np.diff(o.indptr))
            keys = orows * dim + o.indices.astype(np.int64)
            pos_chunks.append(np.searchsorted(pattern_keys, keys))
            val_chunks.append(o.data)
            term_ids.append(np.full(o.nnz, j, dtype=np.int64))
        self._pos = np.concatenate(pos_chunks)
        self._vals = np.concatenate(val_chunks)
        self._term_of_entry = np.concatenate(term_ids)
        self._amps = np.array([a for a, _, _ in self.terms], dtype=complex)
        self._freqs = np.array([w for _, w, _ in self.terms], dtype=float)
        self._template = sp.csr_matrix(
            (np.zeros(self.nnz, dtype=complex), self.indices, self.indptr), shape=(dim, dim)
        )

    @classmethod
    def constant(cls, space: HilbertSpace, mat) -> "PhasedOperator":
        return cls(space, [(1.0, 0.0, mat)])

    @property
    def is_static(self) -> bool:
        return all(w == 0.0 for _, w, _ in self.terms)

    @property
    def max_phase_frequency(self) -> float:
        return max(abs(w) for _, w, _ in self.terms)

    def spectral_bound(self) -> float:
        """Gershgorin bound on |eigenvalue| valid for every t."""
        mag = sum(abs(a) * abs(o) for a, _, o in self.terms)
        row_sums = np.asarray(abs(mag).sum(axis=1)).ravel()
        return float(row_sums.max()) if row_sums.size else 0.0

    def fill_data(self, t: float, out: np.ndarray) -> np.ndarray:
        coeffs = self._amps * np.exp(1j * self._freqs * t)
        contrib = coeffs[self._term_of_entry] * self._vals
        # terms may overlap in the pattern, so accumulate via bincount
        out.real = np.bincount(self._pos, weights=contrib.real, minlength=self.nnz)
        out.imag = np.bincount(self._pos, weights=contrib.imag, minlength=self.nnz)
        return out

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        data = np.zeros(self.nnz, dtype=complex)
        self.fill_data(t, data)
        dim = self.space.dimension
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(dim, dim))

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        self.fill_data(t, self._template.data)
        return self._template @ psi
