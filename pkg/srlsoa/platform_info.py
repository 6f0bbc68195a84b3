#!/usr/bin/env python3
#
#   Copyright 2021 MultisampledNight
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.
"""
Functions for getting information on the current running platform: how many
worker threads to use, and what machine a run happened on.
"""
import os
import platform
from typing import Optional

import cpuinfo
import numpy as np
import psutil

from . import dogelog
from .errors import BadConfig


THREADS_VARIABLE = "SRLSOA_THREADS"


_cached_cpu = 0


def physical_cores() -> int:
    """
    The number of physical cores. Falls back to the logical ones if psutil
    can't tell, and to 1 if nobody can.
    """
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def resolve_threads(flag: Optional[int] = None) -> int:
    """
    How many worker threads to use: the --threads flag if given, otherwise
    the SRLSOA_THREADS environment variable, otherwise 1. A value of 0 means
    "one per physical core".
    """
    source = "--threads"
    value = flag
    if value is None:
        raw = os.environ.get(THREADS_VARIABLE, "").strip()
        if raw:
            source = THREADS_VARIABLE
            try:
                value = int(raw)
            except ValueError:
                raise BadConfig(
                    f"{THREADS_VARIABLE} must be an integer, got '{raw}'") \
                    from None
        else:
            value = 1

    if value < 0:
        raise BadConfig(f"{source} must not be negative, got {value}")
    if value == 0:
        value = physical_cores()
        dogelog.debug(f"Using one thread per physical core, {value} in total")
    return value


def user_cpu() -> Optional[str]:
    """
    The brand string of the CPU, like "Intel(R) Core(TM) i5-2520M CPU @
    2.50GHz", or None if it can't be determined. Cached after the first call,
    py-cpuinfo is slow.
    """
    global _cached_cpu

    if not isinstance(_cached_cpu, int):
        return _cached_cpu

    try:
        brand = cpuinfo.get_cpu_info().get("brand_raw", None)
    except Exception:
        # py-cpuinfo shells out on some platforms, that can fail in many ways
        brand = None

    _cached_cpu = brand or None
    return _cached_cpu


def platform_descriptor() -> dict:
    """
    What a run log records about the machine. The RAM isn't cached, swap could
    change anytime.
    """
    return {
        "cpu": user_cpu(),
        "physical_cores": physical_cores(),
        "logical_cores": psutil.cpu_count(),
        "ram_bytes": psutil.virtual_memory().total,
        "system": platform.system(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


# vim:textwidth=80:
