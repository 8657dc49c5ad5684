import pytest

from zoo import build_zoo, zoo_cache_dir


@pytest.fixture(scope="session")
def toy_zoo():
    """The trained four-lambda model zoo (built once, cached on disk)."""
    return build_zoo(zoo_cache_dir())
