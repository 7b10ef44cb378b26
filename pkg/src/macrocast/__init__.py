"""macrocast: quarterly growth forecasting with a from-scratch model zoo.

Subpackages/modules follow the processing order: data -> factors ->
learners -> pipeline -> ensemble -> evaluation -> explain, with roster,
synth, config, report, and cli as the batch surface.
"""

__version__ = "0.1.0"
