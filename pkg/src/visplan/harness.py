"""Drive external image-editing models over a benchmark manifest.

An endpoint receives a task image and an instruction and returns an edited
image; the harness collects k samples per task, scores them with the
evaluator, and appends one record per sample to a resumable JSONL journal.
Endpoints can be HTTP services, local commands, or built-in fixtures, so
the whole pipeline runs end to end without any real model.  Budget mode
grants each task a wall-clock allowance and counts it solved if any sample
within the allowance succeeds.
"""

from __future__ import annotations

import base64
import json
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import requests

from .dataset import load_manifest, manifest_root, manifest_style, scoring_task
from .evaluation import (
    BenchmarkReport,
    DetectionConfig,
    SampleRecord,
    aggregate,
    evaluate_candidate,
    image_digest,
    read_records,
)
from .render import decode_image, encode_png, load_image

# --------------------------------------------------------------------------
# Prompts.  These are the instruction strings sent verbatim to endpoints.

MAZE_PROMPT = (
    "Add the blue solution path for the maze, connect start point (solid red "
    "circle) to end point (red 'X' mark). Ensure all original maze elements "
    "(walls, points, etc.) remain unchanged—only add the path."
)

QUEEN_PROMPT = (
    "Generate the solved board by placing one queen (represented by a solid "
    "black circle in the center of a grid cell) in each row, column, and "
    "colored region while ensuring queens do not touch in 8-neighborhood."
)

_COT_SUFFIX = (
    "\n\nYou should first think about the planning process in the mind. "
    "The planning process must be enclosed within <think> and </think> tags."
)

_STAGE1_SUFFIX = (
    "\n\nYou should first think about the planning process in the mind. "
    "The planning process is enclosed within <think> </think> tags."
)

_STAGE2_TEMPLATE = (
    "{base}\n\n<think>{thought}</think>\n\n"
    "According to your thinking process, output the image only."
)


@dataclass(frozen=True)
class PromptTemplate:
    kind: str            # "maze" | "queen"
    cot: bool
    text: str


def prompt_for(kind: str, cot: bool) -> PromptTemplate:
    base = MAZE_PROMPT if kind == "maze" else QUEEN_PROMPT
    return PromptTemplate(kind=kind, cot=cot, text=base + _COT_SUFFIX if cot else base)


def two_stage_prompts(kind: str, thought: str = "") -> tuple[str, str]:
    """Stage-1 text prompt and stage-2 image prompt for endpoints that
    cannot produce text and image jointly."""
    base = MAZE_PROMPT if kind == "maze" else QUEEN_PROMPT
    return base + _STAGE1_SUFFIX, _STAGE2_TEMPLATE.format(base=base, thought=thought)


# --------------------------------------------------------------------------
# Endpoints.


class EndpointFailure(RuntimeError):
    """Permanent endpoint failure (after retries)."""

    tag = "endpoint_failure"


class EndpointTimeout(EndpointFailure):
    tag = "timeout"


class EndpointTransportError(EndpointFailure):
    tag = "transport"


class EndpointMalformedResponse(EndpointFailure):
    tag = "malformed_response"


# A fixture handler maps (image, prompt) to (image, optional text).
FixtureHandler = Callable[[np.ndarray, str], tuple[np.ndarray, Optional[str]]]


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    transport: str                      # "http" | "local-command" | "fixture"
    url: Optional[str] = None
    command: Optional[tuple[str, ...]] = None
    handler: Optional[FixtureHandler] = field(default=None, compare=False)
    timeout: float = 120.0
    max_retries: int = 2
    backoff: float = 0.5
    rate_limit_per_minute: Optional[float] = None
    two_stage_cot: bool = False

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("retries must be >= 0")


class RateLimiter:
    """Token bucket; acquire blocks via the injected sleep until a token
    is available.  Thread-safe."""

    def __init__(
        self,
        per_minute: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = per_minute / 60.0
        self.capacity = max(1.0, per_minute / 60.0)
        self.tokens = self.capacity
        self.updated = clock()
        self.clock = clock
        self.sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(
                    self.capacity, self.tokens + (now - self.updated) * self.rate
                )
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


def _call_http(endpoint: ModelEndpoint, image: np.ndarray, prompt: str) -> tuple[np.ndarray, Optional[str]]:
    payload = {
        "prompt": prompt,
        "image": base64.b64encode(encode_png(image)).decode("ascii"),
    }
    try:
        response = requests.post(endpoint.url, json=payload, timeout=endpoint.timeout)
    except requests.Timeout as exc:
        raise EndpointTimeout(f"{endpoint.name}: request timed out") from exc
    except requests.RequestException as exc:
        raise EndpointTransportError(f"{endpoint.name}: {exc}") from exc
    if response.status_code in (408, 429) or response.status_code >= 500:
        raise EndpointTransportError(
            f"{endpoint.name}: retryable status {response.status_code}"
        )
    if response.status_code != 200:
        raise EndpointFailure(
            f"{endpoint.name}: permanent status {response.status_code}"
        )
    try:
        body = response.json()
        image_out = decode_image(base64.b64decode(body["image"]))
    except Exception as exc:
        raise EndpointMalformedResponse(f"{endpoint.name}: bad response body") from exc
    return image_out, body.get("text")


def _call_command(endpoint: ModelEndpoint, image: np.ndarray, prompt: str) -> tuple[np.ndarray, Optional[str]]:
    with tempfile.TemporaryDirectory(prefix="visplan-edit-") as tmp:
        in_path = Path(tmp) / "input.png"
        out_path = Path(tmp) / "output.png"
        in_path.write_bytes(encode_png(image))
        argv = list(endpoint.command) + [str(in_path), str(out_path), prompt]
        try:
            proc = subprocess.run(
                argv, capture_output=True, timeout=endpoint.timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise EndpointTimeout(f"{endpoint.name}: command timed out") from exc
        if proc.returncode != 0:
            raise EndpointFailure(
                f"{endpoint.name}: exit {proc.returncode}: "
                f"{proc.stderr.decode(errors='replace')[:200]}"
            )
        if not out_path.exists():
            raise EndpointMalformedResponse(f"{endpoint.name}: no output image")
        try:
            return load_image(out_path), None
        except Exception as exc:
            raise EndpointMalformedResponse(f"{endpoint.name}: unreadable output") from exc


def _call_once(endpoint: ModelEndpoint, image: np.ndarray, prompt: str) -> tuple[np.ndarray, Optional[str]]:
    if endpoint.transport == "fixture":
        return endpoint.handler(image, prompt)
    if endpoint.transport == "http":
        return _call_http(endpoint, image, prompt)
    if endpoint.transport == "local-command":
        return _call_command(endpoint, image, prompt)
    raise ValueError(f"unknown transport {endpoint.transport!r}")


@dataclass
class EditResult:
    image: np.ndarray
    latency: float
    text: Optional[str] = None
    retries: int = 0


def edit_image(
    endpoint: ModelEndpoint,
    task_image: np.ndarray,
    prompt: str,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    limiter: Optional[RateLimiter] = None,
) -> EditResult:
    """One model call with retry/backoff; latency spans the successful
    attempt from request to decoded image.  Never mutates the input."""
    last: Optional[EndpointFailure] = None
    for attempt in range(endpoint.max_retries + 1):
        if limiter is not None:
            limiter.acquire()
        t0 = clock()
        try:
            image, text = _call_once(endpoint, task_image, prompt)
            return EditResult(
                image=image, latency=clock() - t0, text=text, retries=attempt
            )
        except EndpointFailure as exc:
            last = exc
            if isinstance(exc, (EndpointTimeout, EndpointTransportError)):
                if attempt < endpoint.max_retries:
                    sleep(endpoint.backoff * (2.0 ** attempt))
                    continue
            raise
    raise last  # pragma: no cover - loop always returns or raises


# --------------------------------------------------------------------------
# Built-in fixtures.


def fixture_endpoint(name: str, handler: FixtureHandler, **kwargs) -> ModelEndpoint:
    return ModelEndpoint(name=name, transport="fixture", handler=handler, **kwargs)


def echo_fixture() -> ModelEndpoint:
    return fixture_endpoint("echo", lambda image, prompt: (image, None))


def blank_fixture(color: tuple[int, int, int] = (255, 255, 255)) -> ModelEndpoint:
    def handler(image: np.ndarray, prompt: str):
        out = np.empty_like(image)
        out[:] = color
        return out, None

    return fixture_endpoint("blank", handler)


def ground_truth_fixture(manifest: dict) -> ModelEndpoint:
    """Returns the stored ground-truth image for the task image it is shown.

    Matching is by image digest, so it exercises the full transport path
    without peeking at task ids.
    """
    root = manifest_root(manifest)
    by_digest = {}
    for desc in manifest["tasks"]:
        task_png = (root / desc["files"]["task"]).read_bytes()
        by_digest[image_digest(task_png)] = root / desc["files"]["gt"]

    def handler(image: np.ndarray, prompt: str):
        digest = image_digest(encode_png(image))
        try:
            return load_image(by_digest[digest]), None
        except KeyError as exc:
            raise EndpointMalformedResponse("unknown task image") from exc

    return fixture_endpoint("ground-truth", handler)


def flaky_fixture(failures_before_success: int, inner: ModelEndpoint) -> ModelEndpoint:
    """Fails with a retryable error the first N calls, then delegates."""
    state = {"left": failures_before_success}

    def handler(image: np.ndarray, prompt: str):
        if state["left"] > 0:
            state["left"] -= 1
            raise EndpointTransportError("injected transient failure")
        return _call_once(inner, image, prompt)

    return fixture_endpoint(f"flaky-{inner.name}", handler,
                            max_retries=max(2, failures_before_success))


def timed_fixture(inner: ModelEndpoint, cost_seconds: float, clock) -> ModelEndpoint:
    """Advances an injectable fake clock by a fixed cost per call."""

    def handler(image: np.ndarray, prompt: str):
        result = _call_once(inner, image, prompt)
        clock.advance(cost_seconds)
        return result

    return fixture_endpoint(f"timed-{inner.name}", handler)


class FakeClock:
    """Deterministic clock for tests and budget arithmetic."""

    def __init__(self, start: float = 0.0) -> None:
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)


# --------------------------------------------------------------------------
# Harness runs.


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str
    endpoint: ModelEndpoint
    out_path: str
    k: int = 5
    cot: bool = False
    parallelism: int = 2
    detection: DetectionConfig = DetectionConfig()
    budget_seconds: Optional[float] = None
    cost_estimate: Optional[float] = None
    task_limit: Optional[int] = None    # truncate the manifest (smoke runs)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


def _journal_keys(path: Path) -> set[tuple[str, int]]:
    if not path.exists():
        return set()
    return {(r.task_id, r.sample_index) for r in read_records(path)}


def _finalize_records(path: Path) -> list[SampleRecord]:
    records = read_records(path)
    records.sort(key=lambda r: (r.task_id, r.sample_index))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json_line() + "\n")
    return records


def _collect_sample(
    cfg: RunConfig,
    endpoint: ModelEndpoint,
    task,
    task_image: np.ndarray,
    gt_image: np.ndarray,
    kind: str,
    sample_index: int,
    style,
    clock,
    sleep,
    limiter,
) -> SampleRecord:
    prompt = prompt_for(kind, cfg.cot).text
    try:
        if cfg.cot and endpoint.two_stage_cot:
            stage1, _ = two_stage_prompts(kind)
            first = edit_image(endpoint, task_image, stage1, clock, sleep, limiter)
            _, stage2 = two_stage_prompts(kind, first.text or "")
            result = edit_image(endpoint, task_image, stage2, clock, sleep, limiter)
            result = replace(result, latency=result.latency + first.latency)
        else:
            result = edit_image(endpoint, task_image, prompt, clock, sleep, limiter)
    except EndpointFailure as exc:
        # A failed sample scores zero but never aborts the run.
        return evaluate_candidate(
            np.zeros_like(task_image),
            task,
            gt_image,
            sample_index=sample_index,
            latency=0.0,
            cfg=cfg.detection,
            style=style,
            candidate_digest="",
            error=exc.tag,
        )
    return evaluate_candidate(
        result.image,
        task,
        gt_image,
        sample_index=sample_index,
        latency=result.latency,
        cfg=cfg.detection,
        style=style,
        candidate_digest=image_digest(encode_png(result.image)),
        error=None,
    )


def run_eval(
    cfg: RunConfig,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[dict[str, BenchmarkReport], list[SampleRecord]]:
    """Collect k samples per manifest task, score them, and aggregate.

    Samples append to the journal as they complete, so an interrupted run
    resumes where it stopped; the finished journal is rewritten in
    (task_id, sample_index) order, making resumed and uninterrupted runs
    byte-identical for deterministic endpoints.
    """
    manifest = load_manifest(cfg.manifest_path)
    root = manifest_root(manifest)
    style = manifest_style(manifest)
    endpoint = cfg.endpoint
    limiter = (
        RateLimiter(endpoint.rate_limit_per_minute, clock, sleep)
        if endpoint.rate_limit_per_minute
        else None
    )
    out_path = Path(cfg.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    done = _journal_keys(out_path)

    descriptors = manifest["tasks"][: cfg.task_limit]
    jobs = []
    for desc in descriptors:
        for i in range(1, cfg.k + 1):
            if (desc["task_id"], i) not in done:
                jobs.append((desc, i))

    def work(job):
        desc, sample_index = job
        task = scoring_task(desc, style)
        task_image = load_image(root / desc["files"]["task"])
        gt_image = load_image(root / desc["files"]["gt"])
        return _collect_sample(
            cfg, endpoint, task, task_image, gt_image, desc["kind"],
            sample_index, style, clock, sleep, limiter,
        )

    with open(out_path, "a", encoding="utf-8") as journal:
        if cfg.parallelism == 1:
            for job in jobs:
                rec = work(job)
                journal.write(rec.to_json_line() + "\n")
                journal.flush()
        else:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                # pool.map yields in submission order; the main thread is
                # the journal's single writer.
                for rec in pool.map(work, jobs):
                    journal.write(rec.to_json_line() + "\n")
                    journal.flush()

    records = _finalize_records(out_path)
    wanted = {d["task_id"] for d in descriptors}
    by_kind: dict[str, list[SampleRecord]] = {}
    kind_of = {d["task_id"]: d["kind"] for d in descriptors}
    for rec in records:
        if rec.task_id in wanted:
            by_kind.setdefault(kind_of[rec.task_id], []).append(rec)
    reports = {
        kind: aggregate(recs, cfg.k) for kind, recs in sorted(by_kind.items())
    }
    return reports, records


# --------------------------------------------------------------------------
# Budget-matched runs.


@dataclass(frozen=True)
class BudgetOutcome:
    task_id: str
    kind: str
    scale: int
    budget: float
    samples_attempted: int
    success: bool


@dataclass(frozen=True)
class BudgetReport:
    budget: float
    outcomes: tuple[BudgetOutcome, ...]

    def success_rate(self, kind: Optional[str] = None, scale: Optional[int] = None) -> float:
        hits = [
            o
            for o in self.outcomes
            if (kind is None or o.kind == kind)
            and (scale is None or o.scale == scale)
        ]
        if not hits:
            return 0.0
        return sum(o.success for o in hits) / len(hits)


def budget_run(
    cfg: RunConfig,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    warn: Optional[Callable[[str], None]] = None,
) -> BudgetReport:
    """Give each task a wall-clock budget and sample until it would be
    exceeded; a task succeeds if any sample within the budget succeeds.

    A sample is attempted only while elapsed + cost_estimate fits the
    budget, so a budget below one estimated sample attempts nothing (and
    warns).
    """
    if cfg.budget_seconds is None or cfg.budget_seconds <= 0:
        raise ValueError("budget_seconds must be positive")
    estimate = cfg.cost_estimate
    if estimate is None or estimate <= 0:
        raise ValueError("cost_estimate must be positive")
    if warn is None:
        def warn(message: str) -> None:
            print(f"warning: {message}")

    manifest = load_manifest(cfg.manifest_path)
    root = manifest_root(manifest)
    style = manifest_style(manifest)
    budget = cfg.budget_seconds

    if budget < estimate:
        warn(
            f"budget {budget:g}s is below the per-sample estimate "
            f"{estimate:g}s; tasks will record zero samples"
        )

    outcomes = []
    for desc in manifest["tasks"][: cfg.task_limit]:
        task = scoring_task(desc, style)
        task_image = load_image(root / desc["files"]["task"])
        gt_image = load_image(root / desc["files"]["gt"])
        start = clock()
        attempted = 0
        success = False
        while (clock() - start) + estimate <= budget:
            attempted += 1
            rec = _collect_sample(
                cfg, cfg.endpoint, task, task_image, gt_image, desc["kind"],
                attempted, style, clock, sleep, None,
            )
            if rec.validity.success:
                success = True
                break
        outcomes.append(
            BudgetOutcome(
                task_id=desc["task_id"],
                kind=desc["kind"],
                scale=desc.get("scale", desc.get("n")),
                budget=budget,
                samples_attempted=attempted,
                success=success,
            )
        )
    return BudgetReport(budget=budget, outcomes=tuple(outcomes))
