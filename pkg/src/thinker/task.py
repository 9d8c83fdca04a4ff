"""The four-stage task state machine.

An episode walks a question through Fast Thinking, Verification, Slow
Thinking, and Summarization inside a single dialogue. Prompts are rendered
from versioned resource files (templates/); routing after Verification
differs between training mode (uses the ground truth) and inference mode
(uses the model's own boxed verdict). Verification itself always runs.

Routing table applied by :func:`advance`:

    fast thinking  -> verification, always
    verification   inference: verdict Yes -> terminal (final = fast answer)
                              No or malformed -> slow thinking
                   training:  fast answer correct -> terminal (final = fast)
                              otherwise -> slow thinking (verdict ignored)
    slow thinking  inference: terminal (final = slow answer)
                   training:  slow correct -> summarization, else terminal
    summarization  terminal (final stays the slow answer)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import lru_cache
from importlib import resources

from .dataset import QAItem
from .errors import EpisodeError
from .grading import ExtractedAnswer, Verdict, answers_equal, extract_boxed, extract_verdict


class Stage(IntEnum):
    """Episode stages in visiting order; never revisited."""

    FAST_THINKING = 1
    VERIFICATION = 2
    SLOW_THINKING = 3
    SUMMARIZATION = 4

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "Stage":
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown stage {key!r}") from None


class Mode(Enum):
    TRAINING = "training"
    INFERENCE = "inference"


# The assistant turn for slow thinking opens with the think marker already in
# place; generation continues after it. Chat backends cannot prefill
# assistant text, so the marker is prepended when the turn is recorded.
RESPONSE_SEED: dict[Stage, str] = {Stage.SLOW_THINKING: "<think>\n"}

_TEMPLATE_FILES = {
    Stage.FAST_THINKING: "fast_thinking.txt",
    Stage.VERIFICATION: "verification.txt",
    Stage.SLOW_THINKING: "slow_thinking.txt",
    Stage.SUMMARIZATION: "summarization.txt",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a prompt template resource verbatim (cached)."""
    return resources.files("thinker.templates").joinpath(name).read_text(encoding="utf-8")


def stage_template(stage: Stage) -> str:
    return load_template(_TEMPLATE_FILES[stage])


def render_prompt(stage: Stage, item: QAItem) -> str:
    """Instantiate the stage template for one question.

    Substitution is a literal replace so questions containing braces
    survive intact. Verification has no placeholder and renders verbatim.
    """
    return stage_template(stage).replace("{question}", item.question)


def render_single_turn_prompt(item: QAItem) -> str:
    """Baseline one-shot prompt: the fast-thinking template without the
    length-limit sentence."""
    return load_template("single_turn.txt").replace("{question}", item.question)


@dataclass(frozen=True)
class StageBudgets:
    """Per-stage generation limits and sampling temperatures."""

    fast_tokens: int = 1000
    verify_tokens: int = 2000
    slow_tokens: int = 6000
    summary_tokens: int = 1000
    temperature: float = 1.0
    summary_temperature: float = 0.6

    def __post_init__(self) -> None:
        for name in ("fast_tokens", "verify_tokens", "slow_tokens", "summary_tokens"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.summary_temperature <= 1.0:
            raise ValueError("summary_temperature must be in (0, 1]")

    def budget_for(self, stage: Stage) -> int:
        return {
            Stage.FAST_THINKING: self.fast_tokens,
            Stage.VERIFICATION: self.verify_tokens,
            Stage.SLOW_THINKING: self.slow_tokens,
            Stage.SUMMARIZATION: self.summary_tokens,
        }[stage]

    def temperature_for(self, stage: Stage) -> float:
        return self.summary_temperature if stage is Stage.SUMMARIZATION else self.temperature


@dataclass
class Turn:
    """One prompt/response exchange."""

    stage: Stage
    prompt: str
    response: str
    token_count: int
    finish_reason: str

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


@dataclass
class EpisodeState:
    """Mutable state of one episode; single-writer, advanced sequentially."""

    mode: Mode
    item: QAItem
    budgets: StageBudgets
    stage: Stage | None = Stage.FAST_THINKING
    pending_prompt: str | None = None
    turns: list[Turn] = field(default_factory=list)
    answers: dict[Stage, ExtractedAnswer | None] = field(default_factory=dict)
    verdict: Verdict | None = None
    final_stage: Stage | None = None
    terminal_step: int | None = None

    @property
    def terminal(self) -> bool:
        return self.stage is None

    def messages(self) -> list[dict[str, str]]:
        """Dialogue so far plus the pending prompt, as chat messages."""
        msgs: list[dict[str, str]] = []
        for turn in self.turns:
            msgs.append({"role": "user", "content": turn.prompt})
            msgs.append({"role": "assistant", "content": turn.response})
        if self.pending_prompt is not None:
            msgs.append({"role": "user", "content": self.pending_prompt})
        return msgs


def begin_episode(item: QAItem, mode: Mode, budgets: StageBudgets | None = None) -> EpisodeState:
    """Start an episode at fast thinking with its prompt rendered.

    The first prompt is mode-independent; mode only affects routing later.
    """
    budgets = budgets or StageBudgets()
    state = EpisodeState(mode=mode, item=item, budgets=budgets)
    state.pending_prompt = render_prompt(Stage.FAST_THINKING, item)
    return state


def _enter(state: EpisodeState, stage: Stage) -> None:
    state.stage = stage
    state.pending_prompt = render_prompt(stage, state.item)


def _terminate(state: EpisodeState, final_stage: Stage) -> None:
    state.stage = None
    state.pending_prompt = None
    state.final_stage = final_stage
    state.terminal_step = len(state.turns) - 1


def advance(state: EpisodeState, result) -> EpisodeState:
    """Record the current stage's response and apply the routing table.

    *result* is any object with ``text``, ``token_count``, and
    ``finish_reason`` attributes (a backend GenerationResult). The response
    is stored with any stage seed prepended, its answer or verdict extracted
    (truncated responses included), and the episode either moves to the next
    stage (pending prompt rendered) or terminates.
    """
    if state.terminal:
        raise EpisodeError("cannot advance a terminal episode")
    stage = state.stage
    assert state.pending_prompt is not None

    full_text = RESPONSE_SEED.get(stage, "") + result.text
    state.turns.append(Turn(
        stage=stage,
        prompt=state.pending_prompt,
        response=full_text,
        token_count=result.token_count,
        finish_reason=result.finish_reason,
    ))

    if stage is Stage.VERIFICATION:
        state.verdict = extract_verdict(full_text)
    else:
        state.answers[stage] = extract_boxed(full_text)

    if stage is Stage.FAST_THINKING:
        _enter(state, Stage.VERIFICATION)
    elif stage is Stage.VERIFICATION:
        if state.mode is Mode.INFERENCE:
            if state.verdict is Verdict.YES:
                _terminate(state, Stage.FAST_THINKING)
            else:
                _enter(state, Stage.SLOW_THINKING)
        else:
            fast_correct = answers_equal(state.answers.get(Stage.FAST_THINKING), state.item.answer)
            if fast_correct:
                _terminate(state, Stage.FAST_THINKING)
            else:
                _enter(state, Stage.SLOW_THINKING)
    elif stage is Stage.SLOW_THINKING:
        if state.mode is Mode.INFERENCE:
            _terminate(state, Stage.SLOW_THINKING)
        else:
            slow_correct = answers_equal(state.answers.get(Stage.SLOW_THINKING), state.item.answer)
            if slow_correct:
                _enter(state, Stage.SUMMARIZATION)
            else:
                _terminate(state, Stage.SLOW_THINKING)
    else:  # SUMMARIZATION: always terminal, final answer stays the slow one
        _terminate(state, Stage.SLOW_THINKING)
    return state


def final_answer(state: EpisodeState) -> ExtractedAnswer | None:
    """The episode's final answer; absent when the deciding stage had no box."""
    if not state.terminal:
        raise EpisodeError("final_answer requires a terminal episode")
    assert state.final_stage is not None
    return state.answers.get(state.final_stage)


@dataclass
class StageRewards:
    """Per-stage scalar rewards; a field is present iff its stage executed."""

    fast: float | None = None
    verify: float | None = None
    slow: float | None = None
    summary: float | None = None

    def for_stage(self, stage: Stage) -> float | None:
        return {
            Stage.FAST_THINKING: self.fast,
            Stage.VERIFICATION: self.verify,
            Stage.SLOW_THINKING: self.slow,
            Stage.SUMMARIZATION: self.summary,
        }[stage]

    def set_for_stage(self, stage: Stage, value: float | None) -> None:
        attr = {
            Stage.FAST_THINKING: "fast",
            Stage.VERIFICATION: "verify",
            Stage.SLOW_THINKING: "slow",
            Stage.SUMMARIZATION: "summary",
        }[stage]
        setattr(self, attr, value)


@dataclass
class Transcript:
    """A finished episode with rewards and run metadata.

    Treated as append-only once terminal: the only later mutation is the
    batch barrier filling in the verification reward.
    """

    episode_id: str
    mode: Mode
    item: QAItem
    seed: int
    backend_id: str
    turns: list[Turn] = field(default_factory=list)
    answers: dict[Stage, ExtractedAnswer | None] = field(default_factory=dict)
    verdict: Verdict | None = None
    final_stage: Stage | None = None
    final_answer: ExtractedAnswer | None = None
    correct: bool | None = None
    rewards: StageRewards = field(default_factory=StageRewards)
    summary_logprob: float | None = None
    logprob_available: bool = True
    failed: bool = False
    error: str | None = None
    created_at: float = field(default_factory=time.time)

    @property
    def total_tokens(self) -> int:
        return sum(t.token_count for t in self.turns)

    def stages_visited(self) -> list[Stage]:
        return [t.stage for t in self.turns]
