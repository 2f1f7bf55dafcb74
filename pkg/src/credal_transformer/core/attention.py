"""Scaled dot-product attention and credal (Dirichlet-evidence) attention.

Standard attention normalizes scores with a softmax. Credal attention reads
the same scores as evidence e_ij = exp(s_ij) for a Dirichlet over attention
distributions with concentration α_ij = e_ij + 1, uses the Dirichlet mean
â_ij = α_ij / α_i0 as attention weights, and reports the vacuity
U_i = L / α_i0 of every query.

Everything is computed in the log domain, which is algebraically identical
and never materializes exp(s):

    log α_ij  = softplus(s_ij)
    log α_i0  = logsumexp_j(softplus(s_ij))
    â_ij      = exp(log α_ij - log α_i0)
    U_i       = exp(log L_i - log α_i0)

Masked keys are removed from the Dirichlet support: they carry no evidence,
no α, and do not count towards L_i (the per-row number of unmasked keys).

Unlike softmax, the credal weights are not shift-invariant: adding c to a
whole row adds evidence everywhere and lowers U_i. Max-subtraction therefore
cannot be used as the stabilizer here.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.config.model import EvidenceFunction, Mechanism
from credal_transformer.core.tensor import (
    Tensor,
    as_tensor,
    exp,
    log,
    log1p,
    logsumexp_rows,
    matmul,
    relu,
    reshape,
    softmax_rows,
    softplus,
    transpose,
    where_mask,
)
from credal_transformer.errors import ConfigError, ContractError, DimensionError

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

NEG_INF = -np.inf


@dataclass(frozen=True)
class AttentionInputs:
    """Queries, keys, values and an optional mask (True = key attendable).

    Leading axes (batch, heads) are allowed; the last two axes are (L, d).
    """

    Q: Tensor
    K: Tensor
    V: Tensor
    mask: NDArray[np.bool_] | None = None

    def __post_init__(self) -> None:
        q, k, v = self.Q.shape, self.K.shape, self.V.shape
        if min(len(q), len(k), len(v)) < 2:  # noqa: PLR2004
            raise DimensionError(f"Q, K, V need at least 2 axes, got {q}, {k}, {v}")
        if q[-1] != k[-1]:
            raise DimensionError(f"Q {q} and K {k} must share d_k")
        if not q[-2] == k[-2] == v[-2]:
            raise DimensionError(f"Q {q}, K {k} and V {v} must share sequence length L")
        if self.mask is not None:
            validate_mask(self.mask, q[-2])

    @property
    def d_k(self) -> int:
        return self.Q.shape[-1]


@dataclass(frozen=True)
class ScoreMatrix:
    """Raw scores s_ij = Q_i·K_j / sqrt(d_k), masked keys flagged but not yet replaced."""

    s: Tensor
    mask: NDArray[np.bool_] | None = None

    @property
    def L(self) -> int:
        return self.s.shape[-1]

    @property
    def effective_length(self) -> NDArray[np.float64]:
        """Number of unmasked keys per query row (shape = s.shape[:-1])."""
        if self.mask is None:
            return np.full(self.s.shape[:-1], float(self.L))
        counts = np.broadcast_to(self.mask, self.s.shape).sum(axis=-1)
        return counts.astype(np.float64)


@dataclass(frozen=True)
class Concentration:
    """Dirichlet concentration per query, held in the log domain."""

    log_alpha: Tensor
    log_alpha0: Tensor
    effective_length: NDArray[np.float64]

    @property
    def alpha(self) -> NDArray[np.float64]:
        """α_ij = e_ij + 1 (masked entries 0, i.e. absent). May overflow for s > ~709."""
        return np.exp(self.log_alpha.values)

    @property
    def alpha0(self) -> NDArray[np.float64]:
        """α_i0 = Σ_j α_ij over unmasked keys."""
        return np.exp(self.log_alpha0.values)


@dataclass(frozen=True)
class StandardAttentionOutput:
    a: Tensor
    context: Tensor


@dataclass(frozen=True)
class CredalAttentionOutput:
    """Expected attention, vacuity and the Dirichlet parameters behind them."""

    a_hat: Tensor
    log_evidence: Tensor
    log_alpha: Tensor
    log_alpha0: Tensor
    vacuity: Tensor
    context: Tensor
    effective_length: NDArray[np.float64]

    @property
    def alpha(self) -> NDArray[np.float64]:
        return np.exp(self.log_alpha.values)

    @property
    def alpha0(self) -> NDArray[np.float64]:
        return np.exp(self.log_alpha0.values)


def validate_mask(mask: NDArray[np.bool_], L: int) -> None:
    """Masks are (..., L, L) booleans with at least one attendable key per row.

    Raises:
        DimensionError: On a wrongly shaped mask
        ContractError: If some query row has every key masked
    """
    if mask.ndim < 2 or mask.shape[-2:] != (L, L):  # noqa: PLR2004
        raise DimensionError(f"mask shape {mask.shape} does not end in ({L}, {L})")
    if not np.all(mask.any(axis=-1)):
        raise ContractError("every mask row needs at least one attendable key")


def compute_scores(inputs: AttentionInputs) -> ScoreMatrix:
    """s = Q·Kᵀ / sqrt(d_k)."""
    s = matmul(inputs.Q, transpose(inputs.K)) * (1.0 / math.sqrt(inputs.d_k))
    return ScoreMatrix(s=s, mask=inputs.mask)


def _resolve_mask(scores: ScoreMatrix, mask: NDArray[np.bool_] | None) -> NDArray[np.bool_] | None:
    mask = scores.mask if mask is None else np.asarray(mask, dtype=bool)
    if mask is not None:
        validate_mask(mask, scores.L)
    return mask


def standard_attention(
    scores: ScoreMatrix, V: Tensor, mask: NDArray[np.bool_] | None = None
) -> StandardAttentionOutput:
    """Softmax attention; masked keys get -inf before the softmax (exact zero weight).

    Raises:
        ContractError: If a row is fully masked
    """
    mask = _resolve_mask(scores, mask)
    s = scores.s if mask is None else where_mask(scores.s, mask, NEG_INF)
    a = softmax_rows(s)
    return StandardAttentionOutput(a=a, context=matmul(a, V))


def evidence_from_scores(
    scores: ScoreMatrix,
    evidence: EvidenceFunction = EvidenceFunction.EXP,
) -> Tensor:
    """Log-evidence log e_ij; masked keys get -inf (zero evidence).

    For the exponential evidence map this is the score itself, so e is never
    materialized. The alternative maps are returned as log of their value.
    """
    mask = scores.mask
    if evidence is EvidenceFunction.EXP:
        log_e = scores.s
    elif evidence is EvidenceFunction.SOFTPLUS:
        log_e = log(softplus(scores.s))
    else:
        with np.errstate(divide="ignore"):
            log_e = log(relu(scores.s))
    return log_e if mask is None else where_mask(log_e, mask, NEG_INF)


def concentration(
    log_evidence: Tensor, mask: NDArray[np.bool_] | None = None
) -> Concentration:
    """α_ij = exp(log e_ij) + 1 as log α_ij = softplus(log e_ij); α_i0 over unmasked keys."""
    if mask is None:
        log_alpha = softplus(log_evidence)
    else:
        finite = where_mask(log_evidence, mask, 0.0)
        log_alpha = where_mask(softplus(finite), mask, NEG_INF)
    return _concentration_from_log_alpha(log_alpha, mask)


def _concentration_from_log_alpha(
    log_alpha: Tensor, mask: NDArray[np.bool_] | None
) -> Concentration:
    L = log_alpha.shape[-1]
    if mask is None:
        effective = np.full(log_alpha.shape[:-1], float(L))
    else:
        effective = np.broadcast_to(mask, log_alpha.shape).sum(axis=-1).astype(np.float64)
    return Concentration(
        log_alpha=log_alpha,
        log_alpha0=logsumexp_rows(log_alpha),
        effective_length=effective,
    )


def _log_alpha_from_scores(
    s: Tensor, mask: NDArray[np.bool_] | None, evidence: EvidenceFunction
) -> Tensor:
    if evidence is EvidenceFunction.EXP:
        log_alpha = softplus(s)
    elif evidence is EvidenceFunction.SOFTPLUS:
        log_alpha = log1p(softplus(s))
    else:
        log_alpha = log1p(relu(s))
    return log_alpha if mask is None else where_mask(log_alpha, mask, NEG_INF)


def expected_attention(conc: Concentration) -> Tensor:
    """â_ij = α_ij / α_i0 = exp(log α_ij - log α_i0); masked keys exactly 0.

    Reuses the row logsumexp held by `conc`, so the normalizer behind â is the
    same α_i0 that the vacuity reads.
    """
    log_alpha0 = reshape(conc.log_alpha0, (*conc.log_alpha0.shape, 1))
    return exp(conc.log_alpha - log_alpha0)


def vacuity(log_alpha0: Tensor, effective_length: NDArray[np.float64]) -> Tensor:
    """U_i = L_i / α_i0 = exp(log L_i - log α_i0), strictly inside (0, 1)."""
    if np.any(effective_length < 1):
        raise ContractError("vacuity needs at least one attendable key per row")
    log_length = np.log(effective_length).astype(log_alpha0.dtype)
    return exp(as_tensor(log_length) - log_alpha0)


def credal_attention(
    inputs: AttentionInputs,
    evidence: EvidenceFunction = EvidenceFunction.EXP,
) -> CredalAttentionOutput:
    """Full credal attention: scores → log α → (â, log α_i0) → U, context = â·V."""
    scores = compute_scores(inputs)
    return credal_attention_from_scores(scores, inputs.V, evidence=evidence)


def credal_attention_from_scores(
    scores: ScoreMatrix,
    V: Tensor,
    mask: NDArray[np.bool_] | None = None,
    evidence: EvidenceFunction = EvidenceFunction.EXP,
) -> CredalAttentionOutput:
    """Credal attention on precomputed scores (shared by the multi-head wrapper)."""
    mask = _resolve_mask(scores, mask)
    scores = ScoreMatrix(s=scores.s, mask=mask)
    log_e = evidence_from_scores(scores, evidence)
    if evidence is EvidenceFunction.EXP:
        conc = concentration(log_e, mask)
    else:
        conc = _concentration_from_log_alpha(
            _log_alpha_from_scores(scores.s, mask, evidence), mask
        )
    a_hat = expected_attention(conc)
    return CredalAttentionOutput(
        a_hat=a_hat,
        log_evidence=log_e,
        log_alpha=conc.log_alpha,
        log_alpha0=conc.log_alpha0,
        vacuity=vacuity(conc.log_alpha0, conc.effective_length),
        context=matmul(a_hat, V),
        effective_length=conc.effective_length,
    )


# -- multi-head wrapper -------------------------------------------------


@dataclass(frozen=True)
class AttentionParams:
    """Per-head projections.

    wq, wk: (h, d_model, d_k); wv: (h, d_model, d_v); wo: (h, d_v, d_model).
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor

    @property
    def n_heads(self) -> int:
        return self.wq.shape[0]

    @property
    def d_model(self) -> int:
        return self.wq.shape[1]


def check_head_split(d_model: int, n_heads: int) -> int:
    """Return d_model // n_heads.

    Raises:
        ConfigError: If d_model is not divisible by n_heads
    """
    if n_heads < 1 or d_model % n_heads != 0:
        raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
    return d_model // n_heads


def init_attention_params(
    d_model: int, n_heads: int, rng: np.random.Generator
) -> AttentionParams:
    """Linear weights ~ N(0, 1/fan_in), drawn in the order wq, wk, wv, wo."""
    d_head = check_head_split(d_model, n_heads)
    std_in = 1.0 / math.sqrt(d_model)
    return AttentionParams(
        wq=Tensor(rng.normal(0.0, std_in, (n_heads, d_model, d_head)), requires_grad=True),
        wk=Tensor(rng.normal(0.0, std_in, (n_heads, d_model, d_head)), requires_grad=True),
        wv=Tensor(rng.normal(0.0, std_in, (n_heads, d_model, d_head)), requires_grad=True),
        wo=Tensor(rng.normal(0.0, std_in, (n_heads, d_head, d_model)), requires_grad=True),
    )


def _per_head_mask(mask: NDArray[np.bool_] | None) -> NDArray[np.bool_] | None:
    """Insert a head axis into batched (..., L, L) masks; (L, L) masks broadcast as is."""
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    return mask[..., None, :, :] if mask.ndim > 2 else mask  # noqa: PLR2004


@dataclass(frozen=True)
class MultiHeadOutput:
    """Block output (..., L, d_model); per-head vacuity (..., h, L) in credal mode."""

    output: Tensor
    head_vacuity: Tensor | None
    weights: Tensor


def multi_head_attention(
    x: Tensor,
    params: AttentionParams,
    mechanism: Mechanism,
    mask: NDArray[np.bool_] | None = None,
    evidence: EvidenceFunction = EvidenceFunction.EXP,
) -> MultiHeadOutput:
    """Project to heads, run the chosen mechanism per head, concatenate, project back.

    Args:
        x: Input of shape (..., L, d_model)
        params: Head projections
        mechanism: standard (softmax) or credal
        mask: Optional (L, L) or (..., L, L) attendability mask, shared by all heads
        evidence: Evidence map for credal mode

    Raises:
        ConfigError: If the projections do not split d_model evenly across heads
        DimensionError: If x does not match the projection width
    """
    n_heads, d_model = params.n_heads, params.d_model
    d_head = check_head_split(d_model, n_heads)
    if params.wq.shape[-1] * n_heads != d_model or params.wo.shape[-1] != d_model:
        raise ConfigError(
            f"head projections {params.wq.shape} / {params.wo.shape} do not split d_model={d_model}"
        )
    if x.ndim < 2 or x.shape[-1] != d_model:  # noqa: PLR2004
        raise DimensionError(f"input {x.shape} does not end in d_model={d_model}")

    lead, L = x.shape[:-2], x.shape[-2]
    xh = x.reshape(*lead, 1, L, d_model)
    inputs = AttentionInputs(
        Q=matmul(xh, params.wq),
        K=matmul(xh, params.wk),
        V=matmul(xh, params.wv),
        mask=_per_head_mask(mask),
    )
    scores = compute_scores(inputs)
    logger.debug("multi-head %s: %d heads of width %d, L=%d", mechanism, n_heads, d_head, L)

    head_vacuity: Tensor | None
    if mechanism is Mechanism.CREDAL:
        credal = credal_attention_from_scores(scores, inputs.V, evidence=evidence)
        context, weights, head_vacuity = credal.context, credal.a_hat, credal.vacuity
    else:
        standard = standard_attention(scores, inputs.V)
        context, weights, head_vacuity = standard.context, standard.a, None

    per_head = matmul(context, params.wo)
    return MultiHeadOutput(output=per_head.sum(axis=-3), head_vacuity=head_vacuity, weights=weights)
