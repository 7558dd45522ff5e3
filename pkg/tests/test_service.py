import json
import threading

import pytest
import requests

from annogate.cli import main as cli_main
from annogate.errors import NotFoundError
from annogate.project import ProjectState, read_decision_log
from annogate.service import ReviewService, serve

from helpers import bulk_decisions, make_project, tsv


@pytest.fixture
def project(tmp_path):
    """One column; two divergences in system a, one in system b."""
    texts = {
        "m1a": tsv([
            ["Durand", "1880", "", "12 rue X", "2-4"],
            ["Petit", "1891", "", "3 av Y", ""],
            ["Moreau", "1900", "", "7 bd Z", "1-3"],
        ]),
        "m2a": tsv([
            ["Durand", "1880", "", "12 rue X", "2-4"],
            ["Petit", "1891", "", "3 av Y bis", ""],  # address diverges
            ["Moreau", "1901", "", "7 bd Z", "1-3"],  # year diverges
        ]),
        "m1b": tsv([
            ["Durand", "1880", "", "12 rue X", "2-4"],
            ["Petit", "1891", "", "3 av Y", ""],
            ["Moreau", "1900", "", "7 bd Z", "1-3"],
        ]),
        "m2b": tsv([
            ["Durant", "1880", "", "12 rue X", "2-4"],  # name diverges
            ["Petit", "1891", "", "3 av Y", ""],
            ["Moreau", "1900", "", "7 bd Z", "1-3"],
        ]),
    }
    paths = make_project(tmp_path / "proj", {"col1": texts})
    assert cli_main(["layer1", "--root", str(paths.root), "--seed", "5"]) == 0
    return paths


def test_queue_summaries_after_layer1(project):
    service = ReviewService(project.root)
    summary = {v["queue_id"]: v for v in service.queue_summaries()}
    assert summary["jury-a"]["total"] == 2
    assert summary["jury-b"]["total"] == 1
    assert summary["verification"]["total"] == 2  # one audit per system
    assert summary["expert"]["total"] == 0
    assert all(v["completed"] == 0 for v in summary.values())


def test_next_task_order_and_lease_exclusion(project):
    service = ReviewService(project.root)
    first = service.next_task("jury-a", "rev1")
    assert first is not None
    # field-key order: ordinal 1 (address) comes before ordinal 2 (year)
    assert first.key.ordinal == 1 and first.key.field == "address"
    second = service.next_task("jury-a", "rev2")
    assert second is not None and second.task_id != first.task_id
    assert second.key.ordinal == 2
    assert service.next_task("jury-a", "rev3") is None
    # the same reviewer re-asking gets their leased task back
    assert service.next_task("jury-a", "rev1").task_id == first.task_id


def test_lease_expiry_frees_task(project):
    now = {"t": 0.0}
    service = ReviewService(project.root, lease_seconds=10.0, clock=lambda: now["t"])
    first = service.next_task("jury-a", "rev1")
    assert service.next_task("jury-a", "rev2").task_id != first.task_id
    now["t"] = 11.0  # rev1's lease expired; task is available again
    assert service.next_task("jury-a", "rev3").task_id == first.task_id


def test_skip_cycles_through_queue(project):
    service = ReviewService(project.root)
    first = service.next_task("jury-a", "rev1")
    other = service.next_task("jury-a", "rev1", skip_task_id=first.task_id)
    assert other.task_id != first.task_id
    back = service.next_task("jury-a", "rev1", skip_task_id=other.task_id)
    assert back.task_id == first.task_id


def test_submit_accept_duplicate_supersede(project):
    service = ReviewService(project.root)
    task = service.next_task("jury-a", "rev1")
    ack = service.submit(task.task_id, "rev1", "3 av Y")
    assert ack["status"] == "accepted"
    summary = {v["queue_id"]: v for v in service.queue_summaries()}
    assert summary["jury-a"]["completed"] == 1
    # identical resubmission: idempotent, nothing changes
    again = service.submit(task.task_id, "rev1", "3 av Y")
    assert again["status"] == "duplicate"
    assert len(read_decision_log(project.decision_log)) == 1
    # differing resubmission supersedes, history retained
    changed = service.submit(task.task_id, "rev1", "3 av Y bis")
    assert changed["status"] == "accepted"
    log = read_decision_log(project.decision_log)
    assert [e.value for e in log] == ["3 av Y", "3 av Y bis"]


def test_submit_unknown_task_rejected(project):
    service = ReviewService(project.root)
    with pytest.raises(NotFoundError):
        service.submit("div|a|nope|0|name", "rev1", "x")


def test_progress_reconstructed_from_log_replay(project):
    service = ReviewService(project.root)
    for queue in ("jury-a", "jury-b"):
        task = service.next_task(queue, "rev1")
        service.submit(task.task_id, "rev1", "value")
    before = service.progress()
    replayed = ProjectState.load(project.root).render_progress()
    assert replayed == before


def test_replay_tolerates_torn_last_line(project):
    service = ReviewService(project.root)
    task = service.next_task("jury-a", "rev1")
    service.submit(task.task_id, "rev1", "value")
    expected = ProjectState.load(project.root).render_progress()
    with open(project.decision_log, "a", encoding="utf-8") as fh:
        fh.write('{"ts": 1.0, "reviewer": "rev1", "task"')  # torn mid-write
    assert ProjectState.load(project.root).render_progress() == expected


def test_stage_progression_to_layer1_resolved(project):
    state = ProjectState.load(project.root)
    assert state.progress_doc()["stages"]["col1"] == "layer1-gated"
    decisions = []
    for qid in ("jury-a", "jury-b"):
        for task in state.pending_tasks(qid):
            decisions.append((task.task_id, qid, "jury", "resolved"))
    bulk_decisions(project.decision_log, decisions)
    state = ProjectState.load(project.root)
    assert state.progress_doc()["stages"]["col1"] == "layer1-resolved"


@pytest.fixture
def http_server(project):
    server = serve(project.root, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, project
    server.shutdown()
    server.server_close()


def test_http_roundtrip(http_server):
    base, project = http_server
    progress = requests.get(f"{base}/api/v1/progress").json()
    assert progress["queues"]["jury-a"]["pending"] == 2

    resp = requests.get(f"{base}/api/v1/queues/jury-a/next", params={"reviewer": "r1"})
    payload = resp.json()["task"]
    assert payload["kind"] == "divergence"
    assert payload["value_a"] != payload["value_b"]
    assert isinstance(payload["spans_a"], list)
    assert payload["queue_id"] == "jury-a"

    ack = requests.post(
        f"{base}/api/v1/decisions",
        json={"task_id": payload["task_id"], "reviewer_id": "r1", "value": "fixed"},
    ).json()
    assert ack["status"] == "accepted"
    after = requests.get(f"{base}/api/v1/progress").json()
    assert after["queues"]["jury-a"]["completed"] == 1

    # unknown task -> 404 with the task id echoed
    bad = requests.post(
        f"{base}/api/v1/decisions",
        json={"task_id": "div|a|zz|0|name", "reviewer_id": "r1", "value": "x"},
    )
    assert bad.status_code == 404
    assert "div|a|zz|0|name" in bad.json()["error"]


def test_http_reviewer_required_and_empty_queue(http_server):
    base, _ = http_server
    resp = requests.get(f"{base}/api/v1/queues/jury-a/next")
    assert resp.status_code == 400
    resp = requests.get(f"{base}/api/v1/queues/expert/next", params={"reviewer": "r"})
    assert resp.json()["task"] is None
    resp = requests.get(f"{base}/api/v1/queues/nope/next", params={"reviewer": "r"})
    assert resp.status_code == 404


def test_http_image_endpoint(http_server):
    base, project = http_server
    missing = requests.get(f"{base}/api/v1/columns/col1/image")
    assert missing.status_code == 404
    image_path = project.column_dir("col1") / "image.png"
    image_path.write_bytes(b"\x89PNG fake bytes")
    found = requests.get(f"{base}/api/v1/columns/col1/image")
    assert found.status_code == 200
    assert found.headers["Content-Type"] == "image/png"
    assert found.content == b"\x89PNG fake bytes"


def test_http_concurrent_submissions_no_lost_updates(http_server):
    base, project = http_server
    tasks = []
    for reviewer in ("r1", "r2"):
        payload = requests.get(
            f"{base}/api/v1/queues/jury-a/next", params={"reviewer": reviewer}
        ).json()["task"]
        tasks.append((payload["task_id"], reviewer))

    def submit(task_id, reviewer):
        requests.post(
            f"{base}/api/v1/decisions",
            json={"task_id": task_id, "reviewer_id": reviewer, "value": f"by-{reviewer}"},
        )

    threads = [threading.Thread(target=submit, args=t) for t in tasks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    state = ProjectState.load(project.root)
    values = {e.task_id: e.value for e in state.log_entries}
    assert values[tasks[0][0]] == "by-r1"
    assert values[tasks[1][0]] == "by-r2"
