import pytest

import planted


@pytest.fixture(scope="session")
def suite() -> planted.PlantedSuite:
    return planted.build_suite()
