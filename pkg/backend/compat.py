from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

try:
    # numpy >= 2.0 renamed trapz; older releases only ship the old name.
    trapezoid = np.trapezoid
except AttributeError:
    try:
        trapezoid = np.trapz
    except AttributeError as e:
        logger.warning("numpy trapezoid shim unavailable: %s", e)
        raise

try:
    # Python >= 3.11; older releases only expose the private mapping.
    get_level_names_mapping = logging.getLevelNamesMapping
except AttributeError:
    def get_level_names_mapping():
        return dict(logging._nameToLevel)
