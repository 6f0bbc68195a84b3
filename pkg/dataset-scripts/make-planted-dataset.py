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
Writes planted.hsic and planted.hsil: a labelled scene with known best bands.

    ./make-planted-dataset.py [SEED [OUTPUT_DIR]]
"""
import os
import sys

from srlsoa import dogelog
from srlsoa.hsi_data import save_cube, save_labels
from srlsoa.synthetic import planted_classification


if __name__ == "__main__":
    dogelog.init()

    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    target = sys.argv[2] if len(sys.argv) > 2 else "."

    cube, labels, planted = planted_classification(seed)
    save_cube(cube, os.path.join(target, "planted.hsic"))
    save_labels(labels, os.path.join(target, "planted.hsil"))
    dogelog.info(f"Wrote {cube.height}x{cube.width}x{cube.bands} scene with "
            f"{labels.class_count} classes to {target}\n"
            f"planted bands: {list(planted)}")


# vim:textwidth=80:
