import pytest

from compactbench.backend import CostModel, LengthModel, MockBackend
from compactbench.prompting import PromptCatalog
from compactbench.tokenization import TokenCounter


@pytest.fixture(scope="session")
def counter() -> TokenCounter:
    return TokenCounter()


@pytest.fixture(scope="session")
def catalog() -> PromptCatalog:
    return PromptCatalog.load()


@pytest.fixture
def mock_backend(counter, catalog) -> MockBackend:
    return MockBackend(counter, catalog=catalog)


@pytest.fixture
def make_backend(counter, catalog):
    def _make(sigma: float = 0.0, cost: CostModel | None = None, **length_kwargs) -> MockBackend:
        length = LengthModel(sigma=sigma, **length_kwargs)
        return MockBackend(counter, cost=cost, length_model=length, catalog=catalog)

    return _make
