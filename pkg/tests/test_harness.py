import http.server
import json
import threading

import numpy as np
import pytest

from visplan.evaluation import image_digest, read_records
from visplan.harness import (
    EndpointFailure,
    EndpointMalformedResponse,
    EndpointTimeout,
    EndpointTransportError,
    FakeClock,
    MAZE_PROMPT,
    QUEEN_PROMPT,
    ModelEndpoint,
    RateLimiter,
    RunConfig,
    blank_fixture,
    budget_run,
    echo_fixture,
    edit_image,
    fixture_endpoint,
    flaky_fixture,
    ground_truth_fixture,
    prompt_for,
    run_eval,
    timed_fixture,
    two_stage_prompts,
)
from visplan.render import decode_image, encode_png, load_image


def test_prompt_templates():
    plain = prompt_for("maze", cot=False)
    assert plain.text == MAZE_PROMPT
    cot = prompt_for("queen", cot=True)
    assert cot.text.startswith(QUEEN_PROMPT)
    assert "<think>" in cot.text and "</think>" in cot.text
    stage1, stage2 = two_stage_prompts("maze", thought="go right")
    assert "<think>" in stage1
    assert "go right" in stage2
    assert stage2.endswith("output the image only.")


def test_echo_fixture_roundtrip():
    image = np.random.default_rng(0).integers(0, 255, (64, 64, 3), dtype=np.uint8)
    result = edit_image(echo_fixture(), image, "noop")
    assert image_digest(result.image) == image_digest(image)


def test_ground_truth_fixture_returns_gt(mini_benchmark):
    out, manifest = mini_benchmark
    endpoint = ground_truth_fixture(manifest)
    desc = manifest["tasks"][0]
    task_image = load_image(out / desc["files"]["task"])
    result = edit_image(endpoint, task_image, "solve")
    gt = load_image(out / desc["files"]["gt"])
    assert np.array_equal(result.image, gt)


def test_flaky_fixture_retries_then_succeeds():
    sleeps = []
    endpoint = flaky_fixture(2, echo_fixture())
    image = np.zeros((32, 32, 3), np.uint8)
    result = edit_image(endpoint, image, "x", sleep=sleeps.append)
    assert result.retries == 2
    assert len(sleeps) == 2
    assert sleeps[1] > sleeps[0]  # exponential backoff


def test_permanent_failure_raises():
    def handler(image, prompt):
        raise EndpointMalformedResponse("broken")

    with pytest.raises(EndpointMalformedResponse):
        edit_image(
            fixture_endpoint("bad", handler),
            np.zeros((8, 8, 3), np.uint8),
            "x",
            sleep=lambda s: None,
        )


def test_transient_failures_exhaust_retries():
    calls = {"n": 0}

    def handler(image, prompt):
        calls["n"] += 1
        raise EndpointTransportError("down")

    endpoint = fixture_endpoint("down", handler, max_retries=3)
    with pytest.raises(EndpointTransportError):
        edit_image(endpoint, np.zeros((8, 8, 3), np.uint8), "x", sleep=lambda s: None)
    assert calls["n"] == 4


def test_rate_limiter_spaces_requests():
    clock = FakeClock()
    limiter = RateLimiter(per_minute=60, clock=clock, sleep=clock.sleep)
    for _ in range(3):
        limiter.acquire()
    # 1 token/s bucket with capacity 1: the third token arrives at t=2.
    assert clock.now == pytest.approx(2.0)


def test_run_eval_ground_truth_closure(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=ground_truth_fixture(manifest),
        out_path=str(tmp_path / "records.jsonl"),
        k=2,
        parallelism=1,
    )
    clock = FakeClock()
    reports, records = run_eval(cfg, clock=clock, sleep=clock.sleep)
    assert reports["maze"].pass_at_1 == 1.0
    assert reports["queen"].pass_at_1 == 1.0
    assert reports["maze"].pass_at_k_any == 1.0
    assert all(r.validity.success for r in records)


def test_run_eval_blank_fixture_scores_zero(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=blank_fixture(),
        out_path=str(tmp_path / "records.jsonl"),
        k=1,
        parallelism=2,
    )
    clock = FakeClock()
    reports, records = run_eval(cfg, clock=clock, sleep=clock.sleep)
    for report in reports.values():
        assert report.pass_at_1 == 0.0
        assert report.pass_at_k_mean == 0.0
        assert report.mean_coverage == 0.0
        assert report.mean_violation == 0.0
    assert all(r.detected == () for r in records)


def test_run_eval_interrupted_resume_identical(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    uninterrupted = tmp_path / "full.jsonl"
    clock = FakeClock()
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=ground_truth_fixture(manifest),
        out_path=str(uninterrupted),
        k=2,
        parallelism=1,
    )
    run_eval(cfg, clock=clock, sleep=clock.sleep)

    # Interrupt after 3 samples, then resume into the same journal.
    interrupted = tmp_path / "resumed.jsonl"
    calls = {"n": 0}
    inner = ground_truth_fixture(manifest)

    def exploding(image, prompt):
        calls["n"] += 1
        if calls["n"] == 4:
            raise KeyboardInterrupt()
        return inner.handler(image, prompt)

    cfg2 = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=fixture_endpoint("exploding-gt", exploding),
        out_path=str(interrupted),
        k=2,
        parallelism=1,
    )
    clock2 = FakeClock()
    with pytest.raises(KeyboardInterrupt):
        run_eval(cfg2, clock=clock2, sleep=clock2.sleep)
    assert len(read_records(interrupted)) == 3

    cfg3 = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=ground_truth_fixture(manifest),
        out_path=str(interrupted),
        k=2,
        parallelism=1,
    )
    clock3 = FakeClock()
    run_eval(cfg3, clock=clock3, sleep=clock3.sleep)
    assert interrupted.read_bytes() == uninterrupted.read_bytes()


def test_budget_arithmetic_225s_at_7p5s(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    clock = FakeClock()
    endpoint = timed_fixture(blank_fixture(), 7.5, clock)
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=endpoint,
        out_path=str(tmp_path / "r.jsonl"),
        budget_seconds=225.0,
        cost_estimate=7.5,
        task_limit=1,
    )
    report = budget_run(cfg, clock=clock, sleep=clock.sleep)
    assert report.outcomes[0].samples_attempted == 30
    assert not report.outcomes[0].success


def test_budget_below_estimate_warns_and_skips(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    clock = FakeClock()
    warnings = []
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=timed_fixture(blank_fixture(), 7.5, clock),
        out_path=str(tmp_path / "r.jsonl"),
        budget_seconds=5.0,
        cost_estimate=7.5,
        task_limit=2,
    )
    report = budget_run(cfg, clock=clock, sleep=clock.sleep, warn=warnings.append)
    assert warnings
    for outcome in report.outcomes:
        assert outcome.samples_attempted == 0
        assert not outcome.success


def test_budget_success_on_third_sample(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    clock = FakeClock()
    gt = ground_truth_fixture(manifest)
    blank = blank_fixture()
    state = {"n": 0}

    def scripted(image, prompt):
        state["n"] += 1
        handler = gt.handler if state["n"] >= 3 else blank.handler
        return handler(image, prompt)

    endpoint = timed_fixture(fixture_endpoint("scripted", scripted), 1.0, clock)
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=endpoint,
        out_path=str(tmp_path / "r.jsonl"),
        budget_seconds=100.0,
        cost_estimate=1.0,
        task_limit=1,
    )
    report = budget_run(cfg, clock=clock, sleep=clock.sleep)
    assert report.outcomes[0].success
    assert report.outcomes[0].samples_attempted == 3


def test_failed_samples_recorded_not_fatal(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark

    def handler(image, prompt):
        raise EndpointTimeout("never answers")

    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=fixture_endpoint("dead", handler, max_retries=0),
        out_path=str(tmp_path / "records.jsonl"),
        k=1,
        parallelism=1,
        task_limit=2,
    )
    clock = FakeClock()
    reports, records = run_eval(cfg, clock=clock, sleep=clock.sleep)
    assert len(records) == 2
    assert all(r.error == "timeout" for r in records)
    assert all(not r.validity.success for r in records)


# ---------------------------------------------------------------- transports


class _Handler(http.server.BaseHTTPRequestHandler):
    fail_first = 0
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.calls <= cls.fail_first:
            self.send_response(503)
            self.end_headers()
            return
        import base64

        image = decode_image(base64.b64decode(body["image"]))
        out = {
            "image": base64.b64encode(encode_png(image)).decode("ascii"),
            "text": "echoed",
        }
        data = json.dumps(out).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def http_echo_server():
    _Handler.calls = 0
    _Handler.fail_first = 0
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/edit"
    server.shutdown()


def test_http_transport_roundtrip(http_echo_server):
    endpoint = ModelEndpoint(name="http-echo", transport="http", url=http_echo_server)
    image = np.random.default_rng(1).integers(0, 255, (32, 32, 3), dtype=np.uint8)
    result = edit_image(endpoint, image, "hi")
    assert np.array_equal(result.image, image)
    assert result.text == "echoed"


def test_http_transport_retries_on_5xx(http_echo_server):
    _Handler.fail_first = 2
    endpoint = ModelEndpoint(
        name="http-flaky", transport="http", url=http_echo_server, max_retries=3,
        backoff=0.0,
    )
    image = np.zeros((16, 16, 3), np.uint8)
    result = edit_image(endpoint, image, "hi", sleep=lambda s: None)
    assert result.retries == 2


def test_local_command_transport(tmp_path):
    script = tmp_path / "copy.py"
    script.write_text(
        "import shutil, sys\n"
        "shutil.copy(sys.argv[1], sys.argv[2])\n"
    )
    endpoint = ModelEndpoint(
        name="copy", transport="local-command", command=("python3", str(script))
    )
    image = np.random.default_rng(2).integers(0, 255, (24, 24, 3), dtype=np.uint8)
    result = edit_image(endpoint, image, "prompt with spaces")
    assert np.array_equal(result.image, image)


def test_local_command_nonzero_exit_is_permanent(tmp_path):
    script = tmp_path / "fail.py"
    script.write_text("import sys\nsys.exit(3)\n")
    endpoint = ModelEndpoint(
        name="fail", transport="local-command", command=("python3", str(script))
    )
    with pytest.raises(EndpointFailure):
        edit_image(endpoint, np.zeros((8, 8, 3), np.uint8), "x", sleep=lambda s: None)


def test_two_stage_cot_flow(mini_benchmark, tmp_path):
    out, manifest = mini_benchmark
    prompts_seen = []
    gt = ground_truth_fixture(manifest)

    def handler(image, prompt):
        prompts_seen.append(prompt)
        if "output the image only" not in prompt:
            # Stage 1: text only; echo the input image as a placeholder.
            return image, "trace the corridor"
        return gt.handler(image, prompt)

    endpoint = ModelEndpoint(
        name="two-stage", transport="fixture", handler=handler, two_stage_cot=True
    )
    cfg = RunConfig(
        manifest_path=str(out / "manifest.json"),
        endpoint=endpoint,
        out_path=str(tmp_path / "records.jsonl"),
        k=1,
        cot=True,
        parallelism=1,
        task_limit=1,
    )
    clock = FakeClock()
    reports, records = run_eval(cfg, clock=clock, sleep=clock.sleep)
    assert len(prompts_seen) == 2
    assert "<think>" in prompts_seen[0]
    assert "trace the corridor" in prompts_seen[1]
    assert records[0].validity.success
