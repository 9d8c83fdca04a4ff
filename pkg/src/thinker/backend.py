"""Text-generation backends behind one interface.

Three implementations share the generate/score contract:

* MockBackend replays fixture text keyed on (stage, item id), for tests.
* ScriptedPolicyBackend samples parametric responses (correct with tunable
  probabilities) so the task's dynamics can be simulated without a model.
* HttpBackend speaks chat-completions JSON to any inference server.

Requests carry the full dialogue plus non-wire metadata (stage, item id,
reference answer) that only the in-process backends read; the HTTP client
serializes exactly {model, messages, max_tokens, temperature, seed}.
"""

from __future__ import annotations

import hashlib
import itertools
import os
import random
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import BackendError, LogprobUnsupportedError, MockFixtureError
from .grading import answers_equal, extract_boxed, parse_numeric
from .task import Stage

FINISH_STOP = "stop"
FINISH_LENGTH = "length"


def count_tokens(text: str) -> int:
    """Whitespace word count: the default, documented-approximate tokenizer
    used whenever a server does not report usage."""
    return len(text.split())


def truncate_to_budget(text: str, max_tokens: int) -> tuple[str, int, str]:
    """Clip text to a token budget; returns (text, token_count, finish_reason)."""
    words = text.split()
    if len(words) > max_tokens:
        return " ".join(words[:max_tokens]), max_tokens, FINISH_LENGTH
    return text, len(words), FINISH_STOP


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (never Python's salted hash)."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call: full dialogue, budget, temperature, seed.

    stage/item_id/reference_answer are bookkeeping for the in-process
    backends (mock keying, scripted simulation); they never reach the wire.
    """

    messages: tuple[dict, ...]
    max_tokens: int
    temperature: float
    seed: int | None = None
    stage: Stage | None = None
    item_id: str | None = None
    reference_answer: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not self.messages:
            raise ValueError("messages must be nonempty")
        for i, msg in enumerate(self.messages):
            expected = "user" if i % 2 == 0 else "assistant"
            if msg.get("role") != expected:
                raise ValueError("messages must alternate user/assistant starting with user")
        if self.messages[-1]["role"] != "user":
            raise ValueError("the last message must be the pending user prompt")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    token_count: int
    finish_reason: str = FINISH_STOP
    logprob_sum: float | None = None

    def __post_init__(self) -> None:
        if self.logprob_sum is not None and self.logprob_sum > 0:
            raise ValueError("logprob_sum must be <= 0")


class Backend:
    """Interface: concurrent-safe generate(), optional completion scoring."""

    name = "backend"
    supports_scoring = False

    def generate(self, request: GenerationRequest) -> GenerationResult:
        raise NotImplementedError

    def score_logprob(self, prompt_messages, completion_text: str) -> float:
        """Sum of token log-probabilities of the completion under the given
        prompt; <= 0. Raises LogprobUnsupportedError when unavailable."""
        raise LogprobUnsupportedError(f"{self.name} backend cannot score completions")


class MockBackend(Backend):
    """Fixture-driven backend for deterministic tests.

    fixtures maps (stage, item_id) to verbatim response text; scoring
    returns one configured value (0.0 for empty completions). Every generate
    call is appended to .calls for assertions.
    """

    name = "mock"
    supports_scoring = True

    def __init__(self, fixtures: dict[tuple[Stage, str], str],
                 logprob_value: float = -100.0):
        self.fixtures = dict(fixtures)
        self.logprob_value = logprob_value
        self.calls: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.calls.append(request)
        key = (request.stage, request.item_id)
        try:
            text = self.fixtures[key]
        except KeyError:
            stage_key = request.stage.key if request.stage else None
            raise MockFixtureError(
                f"no fixture for stage={stage_key!r} item={request.item_id!r}"
            ) from None
        text, tokens, finish = truncate_to_budget(text, request.max_tokens)
        return GenerationResult(text=text, token_count=tokens, finish_reason=finish)

    def score_logprob(self, prompt_messages, completion_text: str) -> float:
        if not completion_text:
            return 0.0
        return self.logprob_value


@dataclass(frozen=True)
class PolicyParams:
    """Knobs of the scripted policy.

    p_fast / p_slow are the chances the fast / slow stage answers correctly;
    t_p is P(boxed Yes | fast answer was correct) and t_n is
    P(boxed No | fast answer was wrong). Token fields fix each stage's
    response length (whitespace tokens) so length accounting is exact, and
    logprob_per_token makes scored summaries linear in their length.
    p_slow_given_fast_correct optionally overrides p_slow for episodes whose
    correct fast answer was rejected by verification.
    """

    p_fast: float = 0.5
    t_p: float = 0.8
    t_n: float = 0.8
    p_slow: float = 0.5
    p_slow_given_fast_correct: float | None = None
    fast_tokens: int = 120
    verify_tokens: int = 80
    slow_tokens: int = 400
    summary_tokens: int = 350
    logprob_per_token: float = -0.5

    def __post_init__(self) -> None:
        for name in ("p_fast", "t_p", "t_n", "p_slow"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.p_slow_given_fast_correct is not None and not 0.0 <= self.p_slow_given_fast_correct <= 1.0:
            raise ValueError("p_slow_given_fast_correct must be in [0, 1]")
        for name in ("fast_tokens", "verify_tokens", "slow_tokens", "summary_tokens"):
            if getattr(self, name) < 8:
                raise ValueError(f"{name} must be >= 8 (room for the closing sentence)")
        if self.logprob_per_token > 0:
            raise ValueError("logprob_per_token must be <= 0")


_FILLER = ("Working", "through", "the", "given", "quantities", "step", "by", "step.")
_SLOW_FILLER = ("However,", "the", "earlier", "approach", "missed", "a", "case;", "reworking", "it", "now.")


def _padded(lead_words: tuple[str, ...], total_tokens: int, tail: str) -> str:
    """Exactly total_tokens whitespace tokens ending with *tail*."""
    tail_len = len(tail.split())
    pad = max(total_tokens - tail_len, 0)
    words = list(itertools.islice(itertools.cycle(lead_words), pad))
    words.append(tail)
    return " ".join(words)


def wrong_answer(truth: str) -> str:
    """A deterministic incorrect answer: truth+1 for numbers, suffix otherwise."""
    value = parse_numeric(truth.strip())
    if value is not None:
        bumped = value + 1
        if bumped.denominator == 1:
            return str(bumped.numerator)
        return f"{bumped.numerator}/{bumped.denominator}"
    return truth + "_wrong"


def scripted_respond(stage: Stage, item, params: PolicyParams,
                     rng_seed: int, fast_correct: bool | None = None,
                     slow_answer: str | None = None) -> str:
    """Compose one stage response for the scripted policy.

    item is a QAItem (or bare answer string): the ground truth the simulated
    agent targets. fast_correct drives the verification verdict and the
    per-branch slow override; slow_answer is echoed by the summary stage.
    """
    question_answer = getattr(item, "answer", item)
    rng = random.Random(rng_seed)
    if stage is Stage.FAST_THINKING:
        correct = rng.random() < params.p_fast
        answer = question_answer if correct else wrong_answer(question_answer)
        tail = f"The final answer is \\boxed{{{answer}}}."
        return _padded(_FILLER, params.fast_tokens, tail)
    if stage is Stage.VERIFICATION:
        if fast_correct is None:
            raise ValueError("verification response needs fast_correct")
        if fast_correct:
            verdict = "Yes" if rng.random() < params.t_p else "No"
        else:
            verdict = "No" if rng.random() < params.t_n else "Yes"
        tail = f"\\boxed{{{verdict}}}"
        return _padded(_FILLER, params.verify_tokens, tail)
    if stage is Stage.SLOW_THINKING:
        p_slow = params.p_slow
        if fast_correct and params.p_slow_given_fast_correct is not None:
            p_slow = params.p_slow_given_fast_correct
        correct = rng.random() < p_slow
        answer = question_answer if correct else wrong_answer(question_answer)
        tail = f"</think> The refined answer is \\boxed{{{answer}}}."
        return _padded(_SLOW_FILLER, params.slow_tokens, tail)
    # summarization: restate the slow answer at the configured length
    answer = slow_answer if slow_answer is not None else question_answer
    tail = f"The final answer is \\boxed{{{answer}}}."
    return _padded(_FILLER, params.summary_tokens, tail)


class ScriptedPolicyBackend(Backend):
    """Parametric simulated agent; pure function of the request (incl. seed)."""

    name = "scripted"
    supports_scoring = True

    def __init__(self, params: PolicyParams | None = None):
        self.params = params or PolicyParams()

    def _fast_correct(self, request: GenerationRequest) -> bool:
        # the fast response is the first assistant message of the dialogue
        if len(request.messages) < 2 or request.reference_answer is None:
            return False
        fast = extract_boxed(request.messages[1]["content"])
        return answers_equal(fast, request.reference_answer)

    def _slow_answer(self, request: GenerationRequest) -> str | None:
        for msg in reversed(request.messages):
            if msg["role"] == "assistant" and "<think>" in msg["content"]:
                boxed = extract_boxed(msg["content"])
                return boxed.raw if boxed else None
        return None

    def generate(self, request: GenerationRequest) -> GenerationResult:
        if request.reference_answer is None:
            raise BackendError("scripted backend needs reference_answer metadata")
        # one-shot requests (no stage) behave like fast thinking
        stage = request.stage if request.stage is not None else Stage.FAST_THINKING
        seed = request.seed if request.seed is not None else 0
        text = scripted_respond(
            stage,
            request.reference_answer,
            self.params,
            rng_seed=seed,
            fast_correct=self._fast_correct(request) if stage in (Stage.VERIFICATION, Stage.SLOW_THINKING) else None,
            slow_answer=self._slow_answer(request) if stage is Stage.SUMMARIZATION else None,
        )
        text, tokens, finish = truncate_to_budget(text, request.max_tokens)
        return GenerationResult(text=text, token_count=tokens, finish_reason=finish)

    def score_logprob(self, prompt_messages, completion_text: str) -> float:
        return self.params.logprob_per_token * count_tokens(completion_text)


@dataclass(frozen=True)
class HttpBackendSettings:
    base_url: str = "http://localhost:8000/v1"
    model: str = "default"
    timeout_s: float = 60.0
    max_in_flight: int = 8
    api_key_env: str = "THINKER_API_KEY"
    max_attempts: int = 3
    backoff_s: float = 0.5


class HttpBackend(Backend):
    """Chat-completions client with retries and an in-flight bound.

    Transport errors and 5xx responses are retried with exponential backoff;
    a still-failing call raises BackendError (episodes record the failure,
    they never fabricate text). The API key, when required, comes from the
    environment variable named in the settings, never from config files.
    Completion scoring is not offered over this protocol: third-party
    logprobs are a proxy for the policy's own, so the capability is left to
    in-process backends.
    """

    name = "http"
    supports_scoring = False

    def __init__(self, settings: HttpBackendSettings | None = None, tokenizer=count_tokens):
        self.settings = settings or HttpBackendSettings()
        self.tokenizer = tokenizer
        self._gate = threading.Semaphore(self.settings.max_in_flight)
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.settings.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, payload: dict) -> dict:
        url = self.settings.base_url.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.settings.max_attempts):
            if attempt:
                time.sleep(self.settings.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    url, json=payload, headers=self._headers(),
                    timeout=self.settings.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = BackendError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"request failed with status {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendError(f"malformed JSON from server: {exc}") from exc
        raise BackendError(f"request failed after {self.settings.max_attempts} attempts: {last_error}")

    def generate(self, request: GenerationRequest) -> GenerationResult:
        payload = {
            "model": self.settings.model,
            "messages": [dict(m) for m in request.messages],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        with self._gate:
            body = self._post(payload)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc!r}") from exc
        if not isinstance(text, str):
            raise BackendError("completion content is not a string")
        usage = body.get("usage") or {}
        tokens = usage.get("completion_tokens")
        if not isinstance(tokens, int) or tokens < 0:
            tokens = self.tokenizer(text)
        finish = choice.get("finish_reason")
        finish = FINISH_LENGTH if finish == FINISH_LENGTH else FINISH_STOP
        return GenerationResult(text=text, token_count=tokens, finish_reason=finish)
