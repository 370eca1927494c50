import pytest

from services.initialization_service import initialize_application_services
from services.report_store import ReportStore
from services.report_store_impl import ReportStoreImpl

MEMORY_URL = "sqlite:///:memory:"


@pytest.fixture
def store():
    return ReportStore(ReportStoreImpl(MEMORY_URL))


def test_reports_round_trip(store):
    assert store.is_available
    payload = {"header": {"mode": "parallel"}, "alerts": [{"window": 0, "final": "fire"}]}

    run_id = store.save_report("run", payload, trace_id="trace-1")
    saved = store.get_report(run_id)

    assert saved["payload"] == payload
    assert saved["command"] == "run"
    assert saved["trace_id"] == "trace-1"


def test_reports_are_listed_by_command(store):
    store.save_report("run", {"n": 1})
    store.save_report("bench", {"n": 2})
    store.save_report("run", {"n": 3})

    assert sorted(r["payload"]["n"] for r in store.list_reports("run")) == [1, 3]
    assert [r["payload"]["n"] for r in store.list_reports("bench")] == [2]
    assert len(store.list_reports()) == 3


def test_unknown_run_id(store):
    assert store.get_report("missing") is None


def test_unreachable_database_leaves_store_offline():
    offline = ReportStore(ReportStoreImpl("nosuchdialect://host/db"))
    assert not offline.is_available
    assert offline.save_report("run", {"n": 1}) is None
    assert offline.get_report("anything") is None
    assert offline.list_reports() == []


def test_test_profile_opens_an_in_memory_store(clean_environment):
    services = initialize_application_services("test")
    assert services.env_profile == "test"
    assert services.backend == "replay"
    assert services.report_store is not None and services.report_store.is_available
    assert services.trace_id == services.logger.trace_id


def test_unknown_profile_exits_with_usage_code(tmp_path, clean_environment):
    with pytest.raises(SystemExit) as exc:
        initialize_application_services("staging", str(tmp_path))
    assert exc.value.code == 2
