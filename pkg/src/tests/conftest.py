import pytest

from pcq.heatmap.catalog import ClassCatalog


@pytest.fixture
def catalog() -> ClassCatalog:
    return ClassCatalog.named("nuscenes")


@pytest.fixture
def kitti() -> ClassCatalog:
    return ClassCatalog.named("kitti")


@pytest.fixture(autouse=True)
def bounded_threads(monkeypatch):
    monkeypatch.setenv("PCQ_THREADS", "2")
