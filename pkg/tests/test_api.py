import pytest
from fastapi.testclient import TestClient
from scipy import stats

from src.modules import confsets_api, system
from src.utils.config import global_config
from src.utils.database import initialize_database
from src.utils.server import Server

PREFIX = global_config.api_prefix
C_EXAMPLE = [[1.0, -0.5], [-0.5, 1.0]]
LAM = [2.23606797749979, 2.23606797749979]


@pytest.fixture(scope="module")
def client():
    initialize_database()
    server = Server()
    server.register_router(system.router, prefix=PREFIX)
    server.register_router(confsets_api.router, prefix=PREFIX)
    with TestClient(server.get_app()) as test_client:
        yield test_client


def test_system_endpoints(client):
    health = client.get(f"{PREFIX}/system/health")
    assert health.status_code == 200
    assert health.json()["status"] == "success"

    version = client.get(f"{PREFIX}/system/version").json()
    assert version["data"]["version"] == global_config.version
    assert version["data"]["schema_id"] == "confsets/v1"

    resources = client.get(f"{PREFIX}/system/resources").json()["data"]
    assert resources["cpu_count"] >= 1
    assert resources["default_threads"] >= 1


def test_ellipse_endpoint_records_run(client):
    response = client.post(f"{PREFIX}/ellipse", json={"design": {"C": C_EXAMPLE, "n": 20}, "tuning": {"lam": LAM}})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "success"
    assert body["headline"] == pytest.approx(stats.ncx2.ppf(0.95, 2, 1.0), rel=1e-8)

    stored = client.get(f"{PREFIX}/runs/{body['run_id']}")
    assert stored.status_code == 200
    assert stored.json()["report"]["result"]["k_lasso"] == pytest.approx(body["headline"])

    listing = client.get(f"{PREFIX}/runs", params={"subcommand": "ellipse"}).json()
    assert body["run_id"] in [run["run_id"] for run in listing["runs"]]


def test_worst_case_endpoint(client):
    response = client.post(
        f"{PREFIX}/worst-case",
        json={"C": C_EXAMPLE, "tuning": {"lam": LAM}, "n": 20},
    )
    result = response.json()["report"]["result"]
    assert result["noncentralities"] == pytest.approx([1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0])
    assert result["worst_case_d"] == [[1, 1], [-1, -1]]


def test_solve_and_gram_endpoints(client):
    X = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]]
    y = [1.0, 0.5, 1.4, 1.6]
    solved = client.post(f"{PREFIX}/solve", json={"X": X, "y": y, "lam": [0.1, 0.1]})
    assert solved.status_code == 200
    assert len(solved.json()["report"]["result"]["beta_ls"]) == 2

    gram = client.post(f"{PREFIX}/gram", json={"C": C_EXAMPLE})
    assert gram.json()["headline"] == pytest.approx(3.0)


def test_coverage_and_consistent_endpoints(client):
    coverage = client.post(
        f"{PREFIX}/coverage",
        json={
            "design": {"C": C_EXAMPLE, "n": 20},
            "tuning": {"lam": LAM},
            "shape": {"tag": "box", "lower": [-3, -3], "upper": [3, 3]},
            "mc": {"n_samples": 5000},
            "seed": 1,
        },
    )
    assert coverage.status_code == 200
    assert 0.0 < coverage.json()["headline"] < 1.0

    consistent = client.post(f"{PREFIX}/consistent", json={"C": C_EXAMPLE, "lam": [400.0, 200.0], "n": 10_000})
    assert consistent.status_code == 200
    assert consistent.json()["report"]["result"]["lambda_star"] == 400.0


def test_error_mapping(client):
    missing = client.get(f"{PREFIX}/runs/does-not-exist")
    assert missing.status_code == 404
    assert missing.json() == {"status": "failed", "error": "RunNotFoundError", "detail": "运行记录不存在: does-not-exist"}

    invalid = client.post(f"{PREFIX}/gram", json={"C": [[1.0, 2.0], [0.0, 1.0]]})
    assert invalid.status_code == 422
    assert invalid.json()["status"] == "failed"

    no_seed = client.post(
        f"{PREFIX}/coverage",
        json={"design": {"C": C_EXAMPLE, "n": 20}, "tuning": {"lam": LAM}, "shape": {"tag": "box", "lower": [-1, -1], "upper": [1, 1]}},
    )
    assert no_seed.status_code == 422

    malformed = client.post(f"{PREFIX}/ellipse", json={"design": {"C": C_EXAMPLE, "n": 20}})
    assert malformed.status_code == 422
