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
The shipped dataset presets: which bands are water absorption bands, how many
annotated pixels are used for training, and so on.
"""
import json
from importlib import resources

from ._models import BandList, ExperimentSettings
from .errors import BadConfig
from .helpers import parse_band_ranges


class DatasetPreset:
    """
    Everything known about one of the benchmark scenes. The band ranges are
    1-based and inclusive, like they're usually written down; drop_bands
    holds them converted to 0-based indices.
    """
    def __init__(self, name: str, entry: dict):
        self.name = name
        self.description = entry.get("description", "")
        self.height = entry["height"]
        self.width = entry["width"]
        self.bands = entry["bands"]
        self.classes = entry["classes"]
        self.annotated = entry["annotated"]
        self.water_bands = entry["water_bands"]
        self.train_fraction = entry["train_fraction"]
        self.include_unlabeled_in_fit = entry["include_unlabeled_in_fit"]
        self.table_k_bands = entry["table_k_bands"]

        self.drop_bands = BandList(parse_band_ranges(self.water_bands),
                self.bands)

    @property
    def remaining_bands(self) -> int:
        return self.bands - len(self.drop_bands)

    def settings(self, **changes) -> ExperimentSettings:
        """The experiment settings this scene is usually evaluated with."""
        settings = ExperimentSettings(
                drop_bands=tuple(self.drop_bands),
                train_fraction=self.train_fraction,
                include_unlabeled_in_fit=self.include_unlabeled_in_fit,
            )
        return settings.replace(**changes)

    def __repr__(self) -> str:
        return f'''\tDatasetPreset(
\t\tname = "{self.name}",
\t\tshape = {self.height} x {self.width} x {self.bands},
\t\tdrop = {len(self.drop_bands)} bands,
\t\ttrain_fraction = {self.train_fraction}
\t)'''

    def __str__(self) -> str:
        return self.name


def _resource_contents(resource: str, subfolder: str = "resources") -> dict:
    """
    Returns the JSON contents of the given resource.

    A resource is a JSON file stored in the "resources" folder. It will be
    packaged and delivered alongside with the actual package.
    """
    content = resources.files(__package__) \
        .joinpath(subfolder) \
        .joinpath(resource) \
        .read_text(encoding="utf-8")
    return json.loads(content)


ALL_PRESETS = sorted([
    DatasetPreset(key, value)
    for key, value in
    _resource_contents("datasets.json").items()
], key=lambda preset: preset.name)

NAME_TO_PRESET = {
    preset.name: preset
    for preset in ALL_PRESETS
}


def find_preset(name: str) -> DatasetPreset:
    """
    Returns the preset with the given name. "Indian Pines", "indian-pines" and
    "indian_pines" all work.
    """
    key = name.strip().casefold().replace("-", "_").replace(" ", "_")
    try:
        return NAME_TO_PRESET[key]
    except KeyError:
        known = ", ".join(NAME_TO_PRESET)
        raise BadConfig(f"unknown dataset '{name}' (known: {known})") from None


# vim:textwidth=80:
