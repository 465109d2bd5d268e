import pytest

from firmbot import fixture_path
from firmbot.dialog import Engine
from firmbot.fulfillment import InMemoryFulfillment
from firmbot.model import compile_hierarchy, load_manifest
from firmbot.nlu import build_all_models
from firmbot.responses import load_responses


@pytest.fixture(scope="session")
def manifest():
    return compile_hierarchy(load_manifest(fixture_path("legal_firm.json")))


@pytest.fixture(scope="session")
def models(manifest):
    return build_all_models(manifest)


@pytest.fixture(scope="session")
def responses():
    return load_responses(fixture_path("responses.csv"))


@pytest.fixture()
def memory_sink():
    return InMemoryFulfillment()


@pytest.fixture()
def engine(manifest, responses, models, memory_sink):
    return Engine(manifest, responses, fulfillment=memory_sink, models=models)
