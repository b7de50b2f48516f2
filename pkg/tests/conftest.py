import pytest

from config import EndpointConfig, SceneConfig
from scene.catalog import load_catalog
from scene.generator import generate_scenes
from scene.objects import SpatialRelation
from scene.relations import load_template_bank


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def templates():
    return load_template_bank()


@pytest.fixture(scope="session")
def default_config():
    return SceneConfig(seed=42)


@pytest.fixture(scope="session")
def small_config():
    """Few objects per scene, for tests that need many scenes quickly"""
    return SceneConfig(min_objects=7, seed=3)


@pytest.fixture(scope="session")
def scenes_per_relation(catalog, templates, default_config):
    return {
        relation: generate_scenes(relation, 5, default_config, catalog, templates)
        for relation in SpatialRelation
    }


@pytest.fixture(scope="session")
def small_layouts(catalog, templates, small_config):
    layouts = []
    for relation in SpatialRelation:
        layouts.extend(generate_scenes(relation, 3, small_config, catalog, templates))
    return layouts


@pytest.fixture
def mock_endpoint():
    return EndpointConfig(provider="mock", api_key_env_var="", max_in_flight=4, max_retries=2, backoff_factor=0.001)
