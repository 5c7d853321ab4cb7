"""Residual-driven eigensolver iteration.

Each step applies two exponential factors to the trial state: a unitary
one generated by the anti-Hermitian residual A = <[Gamma_k, H]> and a
norm-changing one generated by the Hermitian residual
B = <{Gamma_k, H - E}> measured on the intermediate state.  Both step
sizes are chosen by a golden-section energy line search.  Residuals are
measured only for the ladder products appearing in the Hamiltonian
(plus their adjoints), so the operator pool never grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError, ValidationError
from .fock import FockBasis, StateVector, normalize, popcount_u64
from .hamiltonian import HamiltonianSpec
from .measurement import Backend
from .operators import (
    AnticommutatorAction,
    CommutatorAction,
    GammaOp,
    SparseOperator,
    apply_exp,
    to_matrix,
)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

# Under-relaxation of the line-search minimizer.  Taking the full greedy
# step equalizes the marginal energy return across competing error modes,
# which strands the iteration in a balanced slow trap; a fractional step
# keeps the mode hierarchy so they are purged one after another.
ETA_RELAX = 0.7


@dataclass(frozen=True)
class CqePool:
    """Distinct non-identity Hamiltonian ladder products, closed under adjoints."""

    ops: tuple
    closed_under_adjoint: bool = True

    def __len__(self) -> int:
        return len(self.ops)


def build_pool(h: HamiltonianSpec) -> CqePool:
    """Pool in Hamiltonian term order with missing adjoints appended."""
    ops: list[GammaOp] = []
    for _, op in h.terms:
        if not op.is_identity and op not in ops:
            ops.append(op)
    for op in list(ops):
        adj = op.adjoint()
        if adj not in ops:
            ops.append(adj)
    return CqePool(tuple(ops))


def pool_matrices(pool: CqePool, basis: FockBasis) -> list:
    return [to_matrix(op, basis) for op in pool.ops]


@dataclass
class CqeConfig:
    eta_bracket: tuple = (-1.0, 1.0)
    eta_tol: float = 1e-6
    eta_max_evals: int = 60
    tol_variance: float = 1e-8
    tol_energy: float = 1e-9
    stall_iters: int = 25
    max_iters: int = 5000
    eta_relax: float = ETA_RELAX
    newton_b: bool = True  # also try the metric-solved Hermitian direction
    expm_tol: float = 1e-12
    initial_state: StateVector | None = None
    backend: Backend = field(default_factory=Backend.exact)

    def __post_init__(self):
        lo, hi = self.eta_bracket
        if not (lo <= 0.0 <= hi and lo < hi):
            raise ValidationError("eta bracket must contain 0")
        for name in ("eta_tol", "tol_variance", "tol_energy", "expm_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.eta_max_evals < 4:
            raise ValidationError("eta_max_evals must allow a few probes")
        if self.stall_iters < 1:
            raise ValidationError("stall_iters must be >= 1")


@dataclass
class IterationRecord:
    n: int
    energy: float
    variance: float
    res_a_norm: float
    res_b_norm: float
    eta_a: float
    eta_b: float
    symmetrized_a: bool = False
    symmetrized_b: bool = False
    sector_weights: np.ndarray | None = None
    sector_weights_unitary: np.ndarray | None = None


@dataclass
class CqeTrace:
    records: list
    final_state: StateVector
    verdict: str

    @property
    def n_steps(self) -> int:
        return max(0, len(self.records) - 1)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def final_energy(self) -> float:
        return float(self.records[-1].energy)


# -- residual measurement and operator assembly ---------------------------


def residual_a(pool: CqePool, h: HamiltonianSpec, psi: StateVector, backend: Backend, mats=None):
    """Anti-Hermitian residual coefficients A_k = <[Gamma_k, H]>."""
    mats = mats if mats is not None else pool_matrices(pool, h.basis)
    hx = h.matrix.apply(psi.amplitudes)
    return np.array(
        [backend.expect(CommutatorAction(g, h.matrix, hx=hx), psi) for g in mats],
        dtype=np.complex128,
    )


def residual_b(
    pool: CqePool,
    h: HamiltonianSpec,
    phi: StateVector,
    energy: float,
    backend: Backend,
    mats=None,
):
    """Hermitian residual coefficients B_k = <{Gamma_k, H - E}>."""
    mats = mats if mats is not None else pool_matrices(pool, h.basis)
    hx = h.matrix.apply(phi.amplitudes)
    return np.array(
        [backend.expect(AnticommutatorAction(g, h.matrix, energy, hx=hx), phi) for g in mats],
        dtype=np.complex128,
    )


class _PoolAssembler:
    """Fast repeated assembly of sum_k c_k Gamma_k over a fixed pool.

    The union sparsity pattern is computed once; each assembly is a single
    (nnz_union x n_pool) matrix-vector product.  Hermiticity enforcement
    happens at coefficient level through the pool's adjoint pairing, which
    is equivalent to matrix-level symmetrization because the adjoint
    permutes the pool onto itself.
    """

    def __init__(self, pool: CqePool, basis: FockBasis, mats):
        self.basis = basis
        self.adjoint_index = np.array(
            [pool.ops.index(op.adjoint()) for op in pool.ops], dtype=np.int64
        )
        pattern = None
        for m in mats:
            part = m.matrix.copy()
            part.data = np.ones_like(part.data)
            pattern = part if pattern is None else pattern + part
        pattern = pattern.tocsr()
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.indices = pattern.indices.copy()
        self.indptr = pattern.indptr.copy()
        nnz = pattern.nnz
        stack = np.zeros((nnz, len(mats)), dtype=np.complex128)
        coo = pattern.tocoo()
        slot = {(int(r), int(c)): i for i, (r, c) in enumerate(zip(coo.row, coo.col))}
        for k, m in enumerate(mats):
            mk = m.matrix.tocoo()
            for r, c, v in zip(mk.row, mk.col, mk.data):
                stack[slot[(int(r), int(c))], k] = v
        self.stack = stack
        self.max_fro = max((m.fro_norm() for m in mats), default=0.0)
        self._template = sp.csr_matrix(
            (np.zeros(nnz, dtype=np.complex128), self.indices, self.indptr),
            shape=(basis.dim, basis.dim),
        )

    def assemble(self, coeffs, kind: str):
        """(operator, symmetrized flag) with Hermitian/anti-Hermitian parity
        enforced via the adjoint pairing of the coefficients."""
        c = np.asarray(coeffs, dtype=np.complex128)
        paired = np.conj(c[self.adjoint_index])
        defect = c + paired if kind == "anti" else c - paired
        defect_norm = float(np.linalg.norm(defect))
        symmetrized = defect_norm > 1e-12 * max(1.0, float(np.linalg.norm(c)))
        if symmetrized:
            c = c - defect / 2.0
        mat = self._template.copy()
        mat.data = self.stack @ c
        op = SparseOperator(self.basis, mat)
        op._herm = "antihermitian" if kind == "anti" else "hermitian"
        slack = math.sqrt(max(len(c), 1)) * self.max_fro
        op._herm_defect = (0.0 if symmetrized else 0.5 * defect_norm * slack) + (
            1e-15 * float(np.linalg.norm(c)) * slack
        )
        return op, symmetrized


def _assemble(mats, coeffs, basis: FockBasis) -> SparseOperator:
    acc = None
    for c, g in zip(coeffs, mats):
        if c == 0.0:
            continue
        piece = complex(c) * g
        acc = piece if acc is None else acc + piece
    if acc is None:
        acc = SparseOperator(basis, np.zeros((basis.dim, basis.dim)))
    return acc


def assemble_antihermitian(pool: CqePool, coeffs, basis: FockBasis, mats=None):
    """X = sum_k A_k Gamma_k, enforced anti-Hermitian.

    With noiseless coefficients the adjoint closure of the pool already
    makes X anti-Hermitian; sampled coefficients are symmetrized
    (X - X^dag)/2 and the fact flagged.
    """
    mats = mats if mats is not None else pool_matrices(pool, basis)
    x = _assemble(mats, coeffs, basis)
    resid = _pair_residual(x, sign=+1.0)
    if resid <= 1e-12 * max(1.0, x.fro_norm()):
        return x, False
    sym = SparseOperator(basis, (x.matrix - x.matrix.getH()) * 0.5)
    return sym, True


def assemble_hermitian(pool: CqePool, coeffs, basis: FockBasis, mats=None):
    """X = sum_k B_k Gamma_k, enforced Hermitian (see assemble_antihermitian)."""
    mats = mats if mats is not None else pool_matrices(pool, basis)
    x = _assemble(mats, coeffs, basis)
    resid = _pair_residual(x, sign=-1.0)
    if resid <= 1e-12 * max(1.0, x.fro_norm()):
        return x, False
    sym = SparseOperator(basis, (x.matrix + x.matrix.getH()) * 0.5)
    return sym, True


def _pair_residual(x: SparseOperator, sign: float) -> float:
    diff = x.matrix + sign * x.matrix.getH()
    return float(np.sqrt((np.abs(diff.data) ** 2).sum())) if diff.nnz else 0.0


class _HermitianStepSolver:
    """Metric-solved Hermitian step in pool-coefficient space.

    The raw residual vector is a steepest-descent direction in the
    coefficients of sum_k c_k S_k (S_k: Hermitian pool combinations); when
    several error modes compete, its useful component collapses and the
    iteration crawls.  Solving the local quadratic model
    (M + lambda) c = -grad instead rescales the weak modes and restores
    fast convergence.  Every matrix element is an expectation value of
    pool-operator products, so the step stays within what the backend can
    measure; sampled backends estimate them with their usual shot noise.
    """

    def __init__(self, pool: CqePool, mats, assembler: _PoolAssembler):
        self.assembler = assembler
        combos = []  # rows of pool coefficients defining each Hermitian S_k
        seen = set()
        n = len(pool.ops)
        for k, op in enumerate(pool.ops):
            if k in seen:
                continue
            adj_k = int(assembler.adjoint_index[k])
            seen.add(k)
            row = np.zeros(n, dtype=np.complex128)
            if adj_k == k:
                row[k] = 1.0
                combos.append(row)
            else:
                seen.add(adj_k)
                row[k] = 1.0
                row[adj_k] = 1.0
                combos.append(row)
                row2 = np.zeros(n, dtype=np.complex128)
                row2[k] = 1.0j
                row2[adj_k] = -1.0j
                combos.append(row2)
        self.combos = np.array(combos)
        self.s_mats = [
            sum(c * m.matrix for c, m in zip(row, mats) if c != 0.0) for row in self.combos
        ]

    def direction(self, h: HamiltonianSpec, phi, energy: float, backend=None, b_raw=None):
        """Hermitian pool combination from the regularized quadratic model.

        With a sampled backend every expectation (gradient via the raw
        residuals, metric entries, centering shifts) carries its own shot
        noise; the regularization grows like 1/sqrt(shots) to damp it.
        """
        exact = backend is None or backend.mode == "exact"
        x = phi.amplitudes
        nb = len(self.s_mats)

        if exact or b_raw is None:
            b_vals = np.array(
                [np.vdot(x, s @ (h.matrix.apply(x) - energy * x)) for s in self.s_mats]
            )
            grad = 2.0 * np.real(b_vals)
        else:
            # <{S_k, H-E}> is the same linear combination of the measured
            # raw residuals that defines S_k from the pool.
            grad = np.real(self.combos.conj() @ b_raw)

        means = np.empty(nb)
        for k, s in enumerate(self.s_mats):
            if exact:
                means[k] = float(np.real(np.vdot(x, s @ x)))
            else:
                means[k] = float(backend.expect(_MatAction(s), phi, real=True))

        hx = h.matrix.apply(x) - energy * x
        svecs = [s @ x - means[k] * x for k, s in enumerate(self.s_mats)]
        hsv = [h.matrix.apply(v) - energy * v for v in svecs]
        s_hx = [s @ hx - means[k] * hx for k, s in enumerate(self.s_mats)]

        metric = np.empty((nb, nb))
        for j in range(nb):
            for k in range(j, nb):
                if exact:
                    t1 = np.real(np.vdot(svecs[j], hsv[k])) + np.real(np.vdot(svecs[k], hsv[j]))
                    t2 = np.real(np.vdot(svecs[j], s_hx[k])) + np.real(np.vdot(svecs[k], s_hx[j]))
                    val = t1 + t2
                else:
                    action = _MetricAction(
                        self.s_mats[j], self.s_mats[k], means[j], means[k], h.matrix, energy
                    )
                    val = float(backend.expect(action, phi, real=True))
                metric[j, k] = metric[k, j] = val
        scale = float(np.abs(np.diag(metric)).max()) if nb else 0.0
        if not np.isfinite(scale) or scale <= 0.0 or np.linalg.norm(grad) == 0.0:
            return None
        lam = 1e-9 * scale
        if not exact:
            lam = max(lam, 10.0 / math.sqrt(backend.shots) * scale)
        try:
            c = np.linalg.solve(metric + lam * np.eye(nb), -grad)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(c)):
            return None
        pool_coeffs = self.combos.T @ c
        op, _ = self.assembler.assemble(pool_coeffs, "herm")
        return op


class _MatAction:
    def __init__(self, mat):
        self.mat = mat

    def apply(self, x):
        return self.mat @ x


class _MetricAction:
    """Quadratic-model metric entry as a single Hermitian observable:

        Sj~ Ht Sk~ + Sk~ Ht Sj~ + ({Sj~ Sk~ + Sk~ Sj~, Ht}) / 2

    with Ht = H - E and S~ = S - <S>.
    """

    def __init__(self, s_j, s_k, mean_j, mean_k, h_op, energy):
        self.s_j = s_j
        self.s_k = s_k
        self.mean_j = mean_j
        self.mean_k = mean_k
        self.h_op = h_op
        self.energy = energy

    def _sj(self, v):
        return self.s_j @ v - self.mean_j * v

    def _sk(self, v):
        return self.s_k @ v - self.mean_k * v

    def _ht(self, v):
        return self.h_op.apply(v) - self.energy * v

    def apply(self, x):
        htx = self._ht(x)
        skx = self._sk(x)
        sjx = self._sj(x)
        out = self._sj(self._ht(skx)) + self._sk(self._ht(sjx))
        out += 0.5 * (self._sj(self._sk(htx)) + self._sk(self._sj(htx)))
        out += 0.5 * self._ht(self._sj(skx) + self._sk(sjx))
        return out


# -- line search -----------------------------------------------------------

# Cap on |eta| * ||X||_1: exp factors beyond this flow time add nothing at
# double precision and only cost substeps.
MAX_FLOW_TIME = 300.0
_EXPAND = 4.0

# Trust-region constant: |eta| <= TRUST_KAPPA / std_psi(X).  Early on the
# residual operator is a crude descent direction and the fluctuation is
# large, so steps stay short; near an eigenstate the fluctuation shrinks
# and long projective flows are allowed.
TRUST_KAPPA = 5.0


class _BudgetExhausted(Exception):
    pass


def line_search(
    h: HamiltonianSpec,
    x_op: SparseOperator,
    psi: StateVector,
    config: CqeConfig,
    backend: Backend,
    e0: float | None = None,
    zero_tol: float = 1e-14,
):
    """Energy minimization along exp(eta*X)|psi>.

    The bracket is taken in flow-time units (eta * ||X||_1) so the search
    range tracks the residual magnitude; a geometric ladder probes the
    whole admissible range (bounded by the trust region) before a
    golden-section refinement, and the accepted step is under-relaxed.
    Returns (eta, state, energy), never above the eta=0 energy.  A
    non-finite energy or series failure shrinks the bracket once before
    giving up.
    """
    if e0 is None:
        e0 = backend.energy(h, psi)
    nrm = x_op.onenorm
    if nrm <= zero_tol:
        return 0.0, psi, e0
    scale = 1.0 / nrm

    xv = x_op.apply(psi.amplitudes)
    mean = np.vdot(psi.amplitudes, xv)
    sigma = math.sqrt(max(float(np.vdot(xv, xv).real) - abs(mean) ** 2, 0.0))
    flow_cap = MAX_FLOW_TIME
    if sigma > 0.0:
        flow_cap = min(flow_cap, TRUST_KAPPA * nrm / sigma)

    best = [0.0, psi, e0]
    cache = {0.0: e0}
    n_evals = [0]

    def evaluate(eta: float) -> float:
        if eta in cache:
            return cache[eta]
        if n_evals[0] >= config.eta_max_evals:
            raise _BudgetExhausted
        n_evals[0] += 1
        state = apply_exp(x_op, eta, psi, tol=config.expm_tol)
        energy = backend.energy(h, state)
        if not math.isfinite(energy):
            raise NumericalError(f"non-finite energy at eta={eta:.6g}")
        cache[eta] = energy
        if energy < best[2]:
            best[0], best[1], best[2] = eta, state, energy
        return energy

    lo, hi = config.eta_bracket
    for attempt in range(2):
        try:
            _ladder_and_refine(evaluate, lo * scale, hi * scale, scale, config, e0, best, flow_cap)
            break
        except _BudgetExhausted:
            break
        except NumericalError:
            if attempt == 1:
                raise
            lo, hi = 0.5 * lo, 0.5 * hi
    if best[0] != 0.0 and config.eta_relax < 1.0:
        try:
            relaxed = config.eta_relax * best[0]
            state = apply_exp(x_op, relaxed, psi, tol=config.expm_tol)
            energy = backend.energy(h, state)
            if math.isfinite(energy) and energy <= e0 + 1e-12:
                return relaxed, state, energy
        except NumericalError:
            pass
    return best[0], best[1], best[2]


def _ladder_and_refine(evaluate, t_lo, t_hi, scale, config, e0, best, flow_cap=MAX_FLOW_TIME):
    """Coarse geometric probe of the whole step range, then local refinement.

    During sector-basin competition the energy along eta is multi-modal (a
    shallow near minimum plus a far one where another symmetry sector takes
    over), so the ladder must cover the full range before refining.
    """
    cap = flow_cap * scale
    for edge in (t_hi, t_lo):
        tau = edge
        while tau != 0.0 and abs(tau) <= cap:
            evaluate(tau)
            tau *= _EXPAND

    tau_star = best[0]
    if tau_star == 0.0:
        a, b = t_lo, t_hi  # interior minimum near eta = 0
    elif tau_star > 0.0:
        a, b = tau_star / _EXPAND, min(tau_star * _EXPAND, cap)
    else:
        a, b = max(tau_star * _EXPAND, -cap), tau_star / _EXPAND

    tol = config.eta_tol * max(1.0, abs(a), abs(b))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = evaluate(c)
    fd = evaluate(d)
    while (b - a) > tol:
        if abs(fc - fd) <= 1e-15 * max(1.0, abs(fc)):
            break  # below energy resolution; refining is pointless
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = evaluate(d)


def _newton_scale_search(h, x_op, phi, config, backend, e0):
    """Short search around the quadratic model's natural scale eta ~ 1."""
    best = (0.0, phi, e0)
    for eta in (0.25, 0.5, 1.0, 1.5, 2.0, 3.0):
        try:
            state = apply_exp(x_op, eta, phi, tol=config.expm_tol)
        except NumericalError:
            break
        energy = backend.energy(h, state)
        if math.isfinite(energy) and energy < best[2]:
            best = (eta, state, energy)
    return best


# -- default trial state ----------------------------------------------------


def tc_initial_state(
    basis: FockBasis, n_sites: int, theta: float = 0.2, kappa: float = 0.5
) -> StateVector:
    """Product trial state with weight in every excitation sector.

    Each site carries cos(theta)|-> + sin(theta)|+>; the boson mode a
    truncated coherent-like profile with amplitude kappa^n / sqrt(n!).
    """
    if basis.n_boson_modes != 1:
        raise ValidationError("the product trial state assumes a single boson mode")
    upper_mask = np.uint64(sum(1 << (2 * i + 1) for i in range(n_sites)))
    n_up = popcount_u64(basis.admitted & upper_mask)
    f_amp = (math.cos(theta) ** (n_sites - n_up)) * (math.sin(theta) ** n_up)

    b_amp = np.empty(basis.n_max + 1, dtype=np.float64)
    b_amp[0] = 1.0
    for n in range(1, basis.n_max + 1):
        b_amp[n] = b_amp[n - 1] * kappa / math.sqrt(n)

    amps = (b_amp[:, None] * f_amp[None, :]).ravel().astype(np.complex128)
    return normalize(StateVector(basis, amps))


# -- driver -----------------------------------------------------------------


def solve(h: HamiltonianSpec, config: CqeConfig, sector_labels: np.ndarray | None = None) -> CqeTrace:
    """Iterate the two-exponential update until variance convergence,
    an energy stall, or the iteration cap.

    ``sector_labels`` (integer per basis state) enables per-iteration
    sector-weight records: weights before the step and after the unitary
    factor alone.
    """
    if config.initial_state is None:
        raise ValidationError("config.initial_state is required")
    psi = normalize(config.initial_state)
    if psi.basis is not h.basis and psi.basis != h.basis:
        raise ValidationError("initial state and Hamiltonian live on different bases")

    backend = config.backend
    pool = build_pool(h)
    mats = pool_matrices(pool, h.basis)
    assembler = _PoolAssembler(pool, h.basis, mats)
    newton = _HermitianStepSolver(pool, mats, assembler) if config.newton_b else None

    n_sectors = 0
    if sector_labels is not None:
        sector_labels = np.asarray(sector_labels, dtype=np.int64)
        if sector_labels.shape != (h.basis.dim,):
            raise ValidationError("sector_labels must assign one label per basis state")
        n_sectors = int(sector_labels.max()) + 1

    def weights(state: StateVector):
        if sector_labels is None:
            return None
        return np.bincount(
            sector_labels, weights=np.abs(state.amplitudes) ** 2, minlength=n_sectors
        )

    records: list[IterationRecord] = []
    verdict = None
    e_cur = backend.energy(h, psi)
    e_prev = None
    stall = 0

    for n in range(config.max_iters + 1):
        if backend.mode == "sampled" and n > 0:
            # fresh draw: carrying the line search's running minimum across
            # iterations would ratchet on lucky noise and fake energy stalls
            e_cur = backend.energy(h, psi)
        var = backend.variance(h, psi)
        w = weights(psi)

        if var <= config.tol_variance:
            verdict = "converged_variance"
        elif e_prev is not None and abs(e_cur - e_prev) <= config.tol_energy:
            stall += 1
            if stall >= config.stall_iters:
                verdict = "converged_energy"
        else:
            stall = 0
        if verdict is None and n == config.max_iters:
            verdict = "max_iters"
        if verdict is not None:
            records.append(
                IterationRecord(
                    n=n,
                    energy=e_cur,
                    variance=var,
                    res_a_norm=math.nan,
                    res_b_norm=math.nan,
                    eta_a=math.nan,
                    eta_b=math.nan,
                    sector_weights=w,
                )
            )
            break

        a_coeffs = residual_a(pool, h, psi, backend, mats=mats)
        a_op, sym_a = assembler.assemble(a_coeffs, "anti")
        eta_a, phi, e_mid = line_search(h, a_op, psi, config, backend, e0=e_cur)
        w_u = weights(phi)

        b_coeffs = residual_b(pool, h, phi, e_mid, backend, mats=mats)
        b_op, sym_b = assembler.assemble(b_coeffs, "herm")
        eta_b, psi_next, e_next = line_search(h, b_op, phi, config, backend, e0=e_mid)
        if newton is not None:
            n_op = newton.direction(h, phi, e_mid, backend=backend, b_raw=b_coeffs)
            if n_op is not None:
                eta_n, psi_n, e_n = _newton_scale_search(h, n_op, phi, config, backend, e_mid)
                if e_n < e_next:
                    eta_b, psi_next, e_next = eta_n, psi_n, e_n

        records.append(
            IterationRecord(
                n=n,
                energy=e_cur,
                variance=var,
                res_a_norm=float(np.linalg.norm(a_coeffs)),
                res_b_norm=float(np.linalg.norm(b_coeffs)),
                eta_a=eta_a,
                eta_b=eta_b,
                symmetrized_a=sym_a,
                symmetrized_b=sym_b,
                sector_weights=w,
                sector_weights_unitary=w_u,
            )
        )
        e_prev, e_cur, psi = e_cur, e_next, psi_next

    return CqeTrace(records=records, final_state=psi, verdict=verdict)


# -- trace export ------------------------------------------------------------


def save_trace(trace: CqeTrace, path) -> None:
    """One record per line, 17-significant-digit reals, fixed field order."""
    n_sectors = 0
    for r in trace.records:
        if r.sector_weights is not None:
            n_sectors = len(r.sector_weights)
            break
    cols = ["iter", "energy", "variance", "res_a_norm", "res_b_norm", "eta_a", "eta_b", "sym_a", "sym_b"]
    cols += [f"w{m}" for m in range(n_sectors)] + [f"u{m}" for m in range(n_sectors)]

    def fmt(x: float) -> str:
        return f"{x:.17g}"

    with open(path, "w", newline="") as fh:
        fh.write("# cqe-trace v1\n")
        fh.write(f"# verdict: {trace.verdict}\n")
        fh.write(f"# steps: {trace.n_steps}\n")
        fh.write("# columns: " + " ".join(cols) + "\n")
        for r in trace.records:
            row = [
                str(r.n),
                fmt(r.energy),
                fmt(r.variance),
                fmt(r.res_a_norm),
                fmt(r.res_b_norm),
                fmt(r.eta_a),
                fmt(r.eta_b),
                str(int(r.symmetrized_a)),
                str(int(r.symmetrized_b)),
            ]
            for block in (r.sector_weights, r.sector_weights_unitary):
                if n_sectors:
                    vals = block if block is not None else [math.nan] * n_sectors
                    row += [fmt(float(v)) for v in vals]
            fh.write(" ".join(row) + "\n")


def load_trace(path) -> dict:
    """Parse a trace document back into arrays (testing/inspection aid)."""
    meta = {}
    rows = []
    columns = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("# columns:"):
                columns = line.split(":", 1)[1].split()
            elif line.startswith("#"):
                if ":" in line:
                    key, val = line[1:].split(":", 1)
                    meta[key.strip()] = val.strip()
            elif line:
                rows.append([float(tok) for tok in line.split()])
    data = np.array(rows) if rows else np.empty((0, 0))
    return {"meta": meta, "columns": columns, "data": data}
