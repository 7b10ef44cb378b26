import numpy as np
import pytest

from macrocast.dates import MonthDate, QuarterDate


def q(text: str) -> QuarterDate:
    return QuarterDate.parse(text)


def m(text: str) -> MonthDate:
    return MonthDate.parse(text)


@pytest.fixture
def rng():
    return np.random.default_rng(20240731)
