"""Benchmark evaluation: pass@1 over k samples, clustered errors, lengths.

Three inference variants are measured: the full staged episode ("thinker"),
the fast stage alone ("thinker_fast"), and a one-shot baseline prompt with a
large budget ("single_turn"). Accuracy is the mean over questions of each
question's mean correctness across k independent samples. Sample seeds
derive from (seed, question id, sample index), so reports do not depend on
question order or on the parallelism bound.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import fmean, variance

from .backend import Backend, GenerationRequest, derive_seed
from .dataset import Dataset
from .errors import BackendError
from .grading import answers_equal, extract_boxed
from .rewards import RewardConfig
from .rollout import run_episode
from .task import Mode, Stage, StageBudgets, advance, begin_episode, render_single_turn_prompt

logger = logging.getLogger("thinker.eval")

THINKER = "thinker"
THINKER_FAST = "thinker_fast"
SINGLE_TURN = "single_turn"
EVAL_MODES = (THINKER, THINKER_FAST, SINGLE_TURN)


@dataclass(frozen=True)
class ReflectionVocab:
    """Self-reflection marker words counted in responses (whole word,
    case-insensitive)."""

    terms: tuple[str, ...] = ("wait", "however", "alternatively")

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("reflection vocabulary must be nonempty")

    def pattern(self) -> re.Pattern:
        alternation = "|".join(re.escape(t) for t in self.terms)
        return re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)


def count_reflections(text: str, vocab: ReflectionVocab | None = None) -> int:
    """Whole-word, case-insensitive occurrences of any reflection term."""
    vocab = vocab or ReflectionVocab()
    if not text:
        return 0
    return len(vocab.pattern().findall(text))


def standard_error(per_question_means: list[float]) -> float:
    """Clustered standard error: sample variance of per-question means over
    the question count (each question is one cluster of equal size)."""
    if len(per_question_means) < 2:
        raise ValueError("standard error needs at least 2 questions")
    return (variance(per_question_means) / len(per_question_means)) ** 0.5


@dataclass
class _SampleOutcome:
    correct: bool
    stage_tokens: dict[str, int]
    total_tokens: int
    reflections: int
    failed: bool = False


@dataclass
class BenchmarkReport:
    """Aggregate measurements over one dataset in one mode."""

    mode: str
    k: int
    num_questions: int
    per_question: list[dict]
    overall_accuracy: float
    stderr: float | None
    mean_stage_tokens: dict[str, float]
    mean_total_tokens: float
    mean_reflections: float
    reflections_per_1000_tokens: float
    failures: int = 0
    excluded_questions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "mode": self.mode,
            "k": self.k,
            "num_questions": self.num_questions,
            "overall_accuracy": self.overall_accuracy,
            "stderr": self.stderr,
            "mean_stage_tokens": self.mean_stage_tokens,
            "mean_total_tokens": self.mean_total_tokens,
            "mean_reflections": self.mean_reflections,
            "reflections_per_1000_tokens": self.reflections_per_1000_tokens,
            "failures": self.failures,
            "excluded_questions": list(self.excluded_questions),
            "per_question": self.per_question,
        }

    def render_table(self) -> str:
        lines = [
            f"mode: {self.mode}   k: {self.k}   questions: {self.num_questions}",
            f"pass@1 accuracy: {100 * self.overall_accuracy:.2f}%"
            + (f"  (se {100 * self.stderr:.2f})" if self.stderr is not None else ""),
            f"mean total tokens: {self.mean_total_tokens:.1f}",
        ]
        for stage_key in sorted(self.mean_stage_tokens):
            lines.append(f"  {stage_key}: {self.mean_stage_tokens[stage_key]:.1f} tokens")
        lines.append(
            f"reflections/episode: {self.mean_reflections:.2f}"
            f"   per 1000 tokens: {self.reflections_per_1000_tokens:.2f}"
        )
        if self.failures:
            lines.append(f"failed samples: {self.failures}")
        if self.excluded_questions:
            lines.append(f"excluded questions: {', '.join(self.excluded_questions)}")
        return "\n".join(lines)


def _thinker_sample(backend, item, budgets, reward_cfg, episode_seed, vocab) -> _SampleOutcome:
    transcript = run_episode(backend, item, Mode.INFERENCE, budgets,
                             seed=episode_seed, reward_cfg=reward_cfg)
    if transcript.failed:
        return _SampleOutcome(False, {}, 0, 0, failed=True)
    return _SampleOutcome(
        correct=bool(transcript.correct),
        stage_tokens={t.stage.key: t.token_count for t in transcript.turns},
        total_tokens=transcript.total_tokens,
        reflections=sum(count_reflections(t.response, vocab) for t in transcript.turns),
    )


def _fast_sample(backend, item, budgets, episode_seed, vocab) -> _SampleOutcome:
    state = begin_episode(item, Mode.INFERENCE, budgets)
    request = GenerationRequest(
        messages=tuple(state.messages()),
        max_tokens=budgets.fast_tokens,
        temperature=budgets.temperature,
        seed=derive_seed(episode_seed, Stage.FAST_THINKING.key),
        stage=Stage.FAST_THINKING,
        item_id=item.id,
        reference_answer=item.answer,
    )
    try:
        result = backend.generate(request)
    except BackendError:
        return _SampleOutcome(False, {}, 0, 0, failed=True)
    advance(state, result)
    answer = state.answers.get(Stage.FAST_THINKING)
    return _SampleOutcome(
        correct=answers_equal(answer, item.answer),
        stage_tokens={Stage.FAST_THINKING.key: result.token_count},
        total_tokens=result.token_count,
        reflections=count_reflections(result.text, vocab),
    )


def _single_turn_sample(backend, item, budgets, single_turn_tokens, episode_seed, vocab) -> _SampleOutcome:
    prompt = render_single_turn_prompt(item)
    request = GenerationRequest(
        messages=({"role": "user", "content": prompt},),
        max_tokens=single_turn_tokens,
        temperature=budgets.temperature,
        seed=derive_seed(episode_seed, "single_turn"),
        stage=None,
        item_id=item.id,
        reference_answer=item.answer,
    )
    try:
        result = backend.generate(request)
    except BackendError:
        return _SampleOutcome(False, {}, 0, 0, failed=True)
    answer = extract_boxed(result.text)
    return _SampleOutcome(
        correct=answers_equal(answer, item.answer),
        stage_tokens={"single_turn": result.token_count},
        total_tokens=result.token_count,
        reflections=count_reflections(result.text, vocab),
    )


def evaluate(backend: Backend, dataset: Dataset, mode: str, k: int,
             budgets: StageBudgets | None = None, seed: int = 0, *,
             reward_cfg: RewardConfig | None = None,
             vocab: ReflectionVocab | None = None,
             parallelism: int = 1,
             single_turn_tokens: int = 8000) -> BenchmarkReport:
    """Measure pass@1 accuracy over k samples per question.

    Questions whose samples all fail are excluded from accuracy (with a
    warning); individual failures are counted and skipped.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"unknown eval mode {mode!r}; expected one of {EVAL_MODES}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    budgets = budgets or StageBudgets()
    reward_cfg = reward_cfg or RewardConfig()
    vocab = vocab or ReflectionVocab()

    def _one(spec) -> _SampleOutcome:
        item, j = spec
        episode_seed = derive_seed(seed, item.id, j)
        if mode == THINKER:
            return _thinker_sample(backend, item, budgets, reward_cfg, episode_seed, vocab)
        if mode == THINKER_FAST:
            return _fast_sample(backend, item, budgets, episode_seed, vocab)
        return _single_turn_sample(backend, item, budgets, single_turn_tokens, episode_seed, vocab)

    specs = [(item, j) for item in dataset for j in range(k)]
    if parallelism <= 1:
        outcomes = [_one(spec) for spec in specs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_one, specs))

    by_question: dict[str, list[_SampleOutcome]] = {}
    for (item, _), outcome in zip(specs, outcomes):
        by_question.setdefault(item.id, []).append(outcome)

    per_question, p_hats, excluded = [], [], []
    failures = 0
    usable: list[_SampleOutcome] = []
    for item in dataset:
        samples = by_question[item.id]
        good = [s for s in samples if not s.failed]
        failures += len(samples) - len(good)
        if not good:
            logger.warning("question %s: all %d samples failed; excluding", item.id, len(samples))
            excluded.append(item.id)
            continue
        usable.extend(good)
        p_hat = fmean(1.0 if s.correct else 0.0 for s in good)
        p_hats.append(p_hat)
        per_question.append({"id": item.id, "accuracy": p_hat, "samples": len(good)})

    if not p_hats:
        raise BackendError("every question failed on all samples")
    stage_tokens: dict[str, list[int]] = {}
    for s in usable:
        for key, tokens in s.stage_tokens.items():
            stage_tokens.setdefault(key, []).append(tokens)
    total_tokens = sum(s.total_tokens for s in usable)
    total_reflections = sum(s.reflections for s in usable)
    return BenchmarkReport(
        mode=mode,
        k=k,
        num_questions=len(p_hats),
        per_question=per_question,
        overall_accuracy=fmean(p_hats),
        stderr=standard_error(p_hats) if len(p_hats) >= 2 else None,
        mean_stage_tokens={key: fmean(v) for key, v in stage_tokens.items()},
        mean_total_tokens=fmean(s.total_tokens for s in usable),
        mean_reflections=fmean(s.reflections for s in usable),
        reflections_per_1000_tokens=(1000.0 * total_reflections / total_tokens) if total_tokens else 0.0,
        failures=failures,
        excluded_questions=excluded,
    )
