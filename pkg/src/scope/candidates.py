"""Candidate-mask pipeline: query expansion, collection, ranking, paging.

A spoken query is expanded into semantically similar prompts, every prompt is
sent to the text-prompt segmentation backends, and the pooled candidates are
greedily deduplicated into pages of six non-overlapping masks for display.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

from .errors import BackendUnavailableError, ConfigurationError, EmptyInputError
from .mask import Mask, iou

DEFAULT_PAGE_SIZE = 6
DEFAULT_OVERLAP_THRESHOLD = 0.10
DEFAULT_EXPANSION_COUNT = 3
DEFAULT_BACKGROUND_AREA_FRACTION = 0.8
DEFAULT_BACKGROUND_PENALTY = 0.5


class QueryExpander(Protocol):
    """LLM-side helper that proposes alternative phrasings for a query."""

    def expand(self, query: str) -> list[str]: ...


class TextSegmenter(Protocol):
    """Text-prompt segmentation backend."""

    backend_id: str

    def segment_text(self, prompt: str, frame_index: int) -> list["ScoredCandidate"]: ...


@dataclass(frozen=True)
class ScoredCandidate:
    mask: Mask
    score: float
    source_prompt: str
    backend_id: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.mask.empty:
            raise ValueError("candidate mask must be non-empty")


@dataclass(frozen=True)
class CandidatePageState:
    """Deduplicated candidates plus the index of the page currently on display."""

    all_candidates: tuple[ScoredCandidate, ...] = ()
    page_size: int = DEFAULT_PAGE_SIZE
    page_index: int = 0

    def __post_init__(self) -> None:
        if self.page_size < 1:
            raise ConfigurationError("page_size must be >= 1")
        if self.page_index < 0:
            raise ConfigurationError("page_index must be >= 0")

    @property
    def exhausted(self) -> bool:
        """True once the display has run past the last page (or was empty)."""
        return self.page_index * self.page_size >= len(self.all_candidates)

    def current_page(self) -> tuple[ScoredCandidate, ...]:
        start = self.page_index * self.page_size
        return self.all_candidates[start : start + self.page_size]

    def page_count(self) -> int:
        return -(-len(self.all_candidates) // self.page_size) if self.all_candidates else 0


@dataclass(frozen=True)
class QueryExpansion:
    """Prompts to fan out, original first. ``degraded`` marks an LLM fallback."""

    prompts: tuple[str, ...]
    degraded: bool = False


def expand_query(
    query: str,
    llm: QueryExpander,
    max_alternatives: int = DEFAULT_EXPANSION_COUNT,
) -> QueryExpansion:
    """Expand a query into the original plus up to N distinct alternatives.

    All prompts are lowercase-normalized and deduplicated. If the LLM backend
    fails, the original query is returned alone with the degraded flag set.
    """
    normalized = query.strip().lower()
    if not normalized:
        raise EmptyInputError("query must be non-empty")
    try:
        raw = llm.expand(normalized)
    except Exception:
        return QueryExpansion(prompts=(normalized,), degraded=True)
    prompts = [normalized]
    for alt in raw:
        alt = alt.strip().lower()
        if alt and alt not in prompts:
            prompts.append(alt)
        if len(prompts) > max_alternatives:
            break
    return QueryExpansion(prompts=tuple(prompts))


@dataclass(frozen=True)
class CollectedCandidates:
    """Pooled per-prompt results; per-prompt failures are recorded, not fatal."""

    candidates: tuple[ScoredCandidate, ...]
    failures: tuple[str, ...] = ()


def collect_candidates(
    prompts: Sequence[str],
    frame_index: int,
    segmenters: Sequence[TextSegmenter],
) -> CollectedCandidates:
    """Fan every prompt out to every segmentation backend and pool the results.

    Calls run concurrently but results merge in deterministic (backend, prompt)
    order. Raises only when every single call failed.
    """
    if not prompts:
        raise EmptyInputError("prompts must be non-empty")
    if not segmenters:
        raise ConfigurationError("at least one segmentation backend is required")
    calls = [(seg, prompt) for seg in segmenters for prompt in prompts]

    def run(call):
        seg, prompt = call
        try:
            return seg.segment_text(prompt, frame_index), None
        except Exception as exc:
            return [], f"{seg.backend_id}:{prompt}: {exc}"

    if len(calls) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(calls))) as pool:
            results = list(pool.map(run, calls))
    else:
        results = [run(calls[0])]

    pooled: list[ScoredCandidate] = []
    failures: list[str] = []
    for cands, failure in results:
        pooled.extend(cands)
        if failure is not None:
            failures.append(failure)
    if not pooled and len(failures) == len(calls):
        raise BackendUnavailableError(
            f"all {len(calls)} segmentation calls failed: {failures}"
        )
    return CollectedCandidates(candidates=tuple(pooled), failures=tuple(failures))


def adjusted_score(
    candidate: ScoredCandidate,
    frame_area: int,
    background_area_fraction: float = DEFAULT_BACKGROUND_AREA_FRACTION,
    background_penalty: float = DEFAULT_BACKGROUND_PENALTY,
) -> float:
    """Backend confidence, penalized for near-whole-frame masks.

    Open-vocabulary detectors love returning the whole image; a multiplicative
    penalty pushes those below genuine object masks without discarding them.
    """
    if candidate.mask.area > background_area_fraction * frame_area:
        return candidate.score * background_penalty
    return candidate.score


def rank_and_dedup(
    candidates: Sequence[ScoredCandidate],
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
    frame_area: int | None = None,
    page_size: int = DEFAULT_PAGE_SIZE,
    background_area_fraction: float = DEFAULT_BACKGROUND_AREA_FRACTION,
    background_penalty: float = DEFAULT_BACKGROUND_PENALTY,
) -> CandidatePageState:
    """Greedy selection of the highest-scoring, non-overlapping candidates.

    Candidates are sorted by adjusted score (ties: larger area, then input
    order) and accepted iff their IoU with every already-accepted mask stays
    at or below the overlap threshold. The accepted list is paged for display.
    """
    if not 0.0 < overlap_threshold < 1.0:
        raise ConfigurationError("overlap_threshold must be in (0, 1)")
    if not candidates:
        return CandidatePageState(page_size=page_size)
    if frame_area is None:
        frame_area = candidates[0].mask.width * candidates[0].mask.height

    def sort_key(indexed):
        i, c = indexed
        score = adjusted_score(c, frame_area, background_area_fraction, background_penalty)
        return (-score, -c.mask.area, i)

    ordered = [c for _, c in sorted(enumerate(candidates), key=sort_key)]
    accepted: list[ScoredCandidate] = []
    for cand in ordered:
        if all(iou(cand.mask, kept.mask) <= overlap_threshold for kept in accepted):
            accepted.append(cand)
    return CandidatePageState(all_candidates=tuple(accepted), page_size=page_size)


def next_page(state: CandidatePageState) -> CandidatePageState:
    """Advance the display; the returned state's ``exhausted`` flag tells the
    agent whether to re-prompt the operator for a refined query."""
    return replace(state, page_index=state.page_index + 1)
