import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

import zslens.service as service_mod
from zslens.service import Session, attach_session, create_app
from zslens.steering import diagnose


@pytest.fixture()
def session(tiny_dataset, tiny_split, tiny_signatures, tiny_model, fast_config):
    return Session(tiny_dataset, tiny_split, tiny_signatures, tiny_model, fast_config)


@pytest.fixture()
def client(session):
    return TestClient(create_app(session))


def wait_for_job(client, job_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/api/retrain/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise AssertionError("retrain job did not finish in time")


# -- readiness ---------------------------------------------------------------------


def test_api_returns_503_until_session_attached(session):
    app = create_app(None)
    client = TestClient(app)
    for path in ("/api/overview", "/api/weights", "/api/metrics"):
        resp = client.get(path)
        assert resp.status_code == 503
        assert resp.json()["code"] == "not_ready"
    attach_session(app, session)
    assert client.get("/api/overview").status_code == 200


# -- overview ----------------------------------------------------------------------


def test_overview_shape(client, tiny_dataset, tiny_split):
    body = client.get("/api/overview").json()
    assert len(body["classes"]) == tiny_dataset.n_classes
    assert body["attributes"] == list(tiny_dataset.attribute_names)
    assert body["revision"] == 0
    seen_flags = [c["seen"] for c in body["classes"]]
    assert sum(seen_flags) == len(tiny_split.seen_classes)
    for c in body["classes"]:
        assert len(c["coords"]) == 2
        assert all(np.isfinite(c["coords"]))
        if c["seen"]:
            assert c["diag_count"] > 0
        else:
            assert c["diag_count"] == 0


def test_overview_idempotent(client):
    assert client.get("/api/overview").json() == client.get("/api/overview").json()


# -- diagnostics --------------------------------------------------------------------


def test_diagnostics_matches_library(client, session, tiny_dataset, tiny_split,
                                     tiny_signatures, tiny_model):
    body = client.get("/api/diagnostics", params={"seen": "seen_00,seen_02"}).json()
    expected = diagnose(
        tiny_model, tiny_dataset, tiny_split, tiny_signatures,
        np.ones(tiny_dataset.n_attributes),
        selected_categories=(0, 2),
    )
    assert np.max(np.abs(np.array(body["q_over"]) - expected.q_over)) <= 1e-12
    assert np.max(np.abs(np.array(body["q_under"]) - expected.q_under)) <= 1e-12
    assert body["categories"] == ["seen_00", "seen_02"]
    assert sorted(body["ordering"]) == list(range(tiny_dataset.n_attributes))
    assert set(body["stacking"]) <= {"seen_00", "seen_02"}
    assert body["weights"] == [1.0] * tiny_dataset.n_attributes
    assert body["revision"] == 0
    assert body["unseen_signatures"] == {}


def test_diagnostics_blank_selection_is_empty(client, tiny_dataset):
    # selection state lives in the client; no seen classes selected means an
    # empty matrix, not an implicit select-all
    for params in ({}, {"seen": " "}):
        body = client.get("/api/diagnostics", params=params).json()
        assert body["categories"] == []
        assert body["q_over"] == [[] for _ in range(tiny_dataset.n_attributes)]
        assert body["stacking"] == []
        assert sorted(body["ordering"]) == list(range(tiny_dataset.n_attributes))


def test_diagnostics_unseen_rows_and_sort(client, tiny_dataset, tiny_signatures):
    body = client.get(
        "/api/diagnostics",
        params={"seen": "seen_00", "unseen": "unseen_01", "sort": "unseen_sum"},
    ).json()
    row = body["unseen_signatures"]["unseen_01"]
    unseen_idx = tiny_dataset.class_index("unseen_01")
    assert np.allclose(row, tiny_signatures.signatures[unseen_idx])
    assert body["sort"] == "unseen_sum"
    assert sorted(body["ordering"]) == list(range(tiny_dataset.n_attributes))


def test_diagnostics_errors(client):
    resp = client.get("/api/diagnostics", params={"seen": "nope"})
    assert resp.status_code == 400 and resp.json()["code"] == "unknown_class"

    resp = client.get("/api/diagnostics", params={"seen": "unseen_00"})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_selection"

    resp = client.get("/api/diagnostics", params={"unseen": "seen_00"})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_selection"

    resp = client.get("/api/diagnostics", params={"sort": "banana"})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_sort"

    resp = client.get("/api/diagnostics", params={"sort": "unseen_sum"})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_sort"


# -- decomposition -------------------------------------------------------------------


def test_decomposition_consistent_with_diagnostics(client, tiny_dataset, tiny_split):
    all_seen = ",".join(tiny_dataset.class_names[y] for y in tiny_split.seen_classes)
    diag = client.get("/api/diagnostics", params={"seen": all_seen}).json()
    q_over = np.array(diag["q_over"])
    checked = 0
    for attr in range(tiny_dataset.n_attributes):
        for j, cat_name in enumerate(diag["categories"]):
            cat = tiny_dataset.class_index(cat_name)
            body = client.get(
                "/api/decomposition",
                params={"attr": attr, "cat": cat, "side": "over"},
            ).json()
            assert body["total"] == pytest.approx(q_over[attr, j], abs=1e-12)
            values = [e["value"] for e in body["breakdown"]]
            assert values == sorted(values, reverse=True)
            assert abs(sum(values) - body["total"]) <= 1e-9
            if not values:
                assert body["total"] == 0.0
            checked += 1
    assert checked == q_over.size


def test_decomposition_errors(client, tiny_dataset):
    unseen_idx = tiny_dataset.class_index("unseen_00")
    for params in (
        {"attr": 0, "cat": 0, "side": "sideways"},
        {"attr": 99, "cat": 0, "side": "over"},
        {"attr": 0, "cat": unseen_idx, "side": "under"},
    ):
        resp = client.get("/api/decomposition", params=params)
        assert resp.status_code == 400
        assert resp.json()["code"] == "invalid_cell"


def test_decomposition_non_numeric_query_is_bad_request(client):
    resp = client.get(
        "/api/decomposition", params={"attr": "x", "cat": 0, "side": "over"}
    )
    assert resp.status_code == 400
    assert resp.json()["code"] == "bad_request"


# -- weights --------------------------------------------------------------------------


def test_weights_get_initial(client, tiny_dataset):
    body = client.get("/api/weights").json()
    assert body == {
        "weights": [1.0] * tiny_dataset.n_attributes,
        "revision": 0,
        "below_guidance": [],
    }


def test_weights_post_decrement(client):
    body = client.post("/api/weights", json={"attr": 3, "delta": -0.1}).json()
    assert body["weights"][3] == pytest.approx(0.9)
    assert body["revision"] == 1

    # diagnostics must reflect the new weights and revision
    diag = client.get("/api/diagnostics").json()
    assert diag["weights"][3] == pytest.approx(0.9)
    assert diag["revision"] == 1


def test_weights_revision_strictly_increases(client):
    revs = [
        client.post("/api/weights", json={"attr": 0, "delta": -0.05}).json()["revision"]
        for _ in range(5)
    ]
    assert revs == sorted(set(revs))
    assert len(revs) == 5


def test_weights_below_guidance_flag(client):
    for _ in range(6):
        body = client.post("/api/weights", json={"attr": 2, "delta": -0.1}).json()
    assert body["weights"][2] == pytest.approx(0.4)
    assert body["below_guidance"] == [2]


def test_weights_post_errors(client):
    resp = client.post("/api/weights", json={"attr": 99, "delta": -0.1})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_attribute"

    resp = client.post("/api/weights", json={"attr": True, "delta": -0.1})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_attribute"

    resp = client.post("/api/weights", json={"attr": 0, "delta": "big"})
    assert resp.status_code == 400 and resp.json()["code"] == "invalid_delta"

    resp = client.post("/api/weights", json={"attr": 0})
    assert resp.status_code == 400 and resp.json()["code"] == "bad_request"

    resp = client.post(
        "/api/weights", content=b"{not json", headers={"content-type": "application/json"}
    )
    assert resp.status_code == 400 and resp.json()["code"] == "bad_request"


# -- retrain ---------------------------------------------------------------------------


def test_retrain_lifecycle_all_ones(client):
    before_rev = client.get("/api/weights").json()["revision"]
    resp = client.post("/api/retrain")
    assert resp.status_code == 200
    job_id = resp.json()["job_id"]

    body = wait_for_job(client, job_id)
    assert body["status"] == "done"
    assert body["error"] is None
    # all-ones weights and a fixed seed: retraining reproduces the model
    assert body["metrics_before"] == body["metrics_after"]
    assert body["unseen_before"] is None and body["unseen_after"] is None
    assert client.get("/api/weights").json()["revision"] == before_rev + 1


def test_retrain_after_steering_changes_metrics(client):
    client.post("/api/weights", json={"attr": 1, "delta": -1.0})
    job_id = client.post("/api/retrain").json()["job_id"]
    body = wait_for_job(client, job_id)
    assert body["status"] == "done"
    assert body["metrics_before"]["overall"] >= 0.0
    assert body["metrics_after"]["overall"] >= 0.0


def test_retrain_conflict_while_running(client, monkeypatch):
    release = threading.Event()
    real = service_mod.retrain

    def slow(*args, **kwargs):
        release.wait(10.0)
        return real(*args, **kwargs)

    monkeypatch.setattr(service_mod, "retrain", slow)
    job_id = client.post("/api/retrain").json()["job_id"]

    resp = client.post("/api/retrain")
    assert resp.status_code == 409
    assert resp.json()["code"] == "retrain_running"

    release.set()
    assert wait_for_job(client, job_id)["status"] == "done"


def test_retrain_unknown_job(client):
    resp = client.get("/api/retrain/42")
    assert resp.status_code == 404 and resp.json()["code"] == "unknown_job"


# -- metrics ----------------------------------------------------------------------------


def test_metrics_endpoint(client, tiny_dataset):
    body = client.get("/api/metrics").json()
    assert 0.0 <= body["diag"]["overall"] <= 1.0
    assert 0.0 <= body["diag"]["mean_per_class"] <= 1.0
    assert body["unseen"] is None
    assert body["revision"] == 0


def test_metrics_with_unseen_eval(tiny_dataset, tiny_split, tiny_signatures,
                                  tiny_model, fast_config):
    session = Session(
        tiny_dataset, tiny_split, tiny_signatures, tiny_model, fast_config,
        eval_unseen=True,
    )
    client = TestClient(create_app(session))
    body = client.get("/api/metrics").json()
    assert body["unseen"] is not None
    assert 0.0 <= body["unseen"]["mean_per_class"] <= 1.0
    assert set(body["unseen"]["per_class"]) == {"unseen_00", "unseen_01"}


# -- static files and fallthrough errors ----------------------------------------------


def test_static_dir_served_at_root(session, tmp_path):
    (tmp_path / "index.html").write_text("<html><body>lens</body></html>")
    client = TestClient(create_app(session, static_dir=str(tmp_path)))
    resp = client.get("/")
    assert resp.status_code == 200
    assert "lens" in resp.text
    assert client.get("/api/overview").status_code == 200


def test_unknown_route_error_shape(client):
    resp = client.get("/api/nothing-here")
    assert resp.status_code == 404
    body = resp.json()
    assert set(body) == {"error", "code"}
    assert body["code"] == "http_error"
