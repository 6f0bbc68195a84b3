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
Everything that can go wrong, as exceptions.

There are three families, and the CLI maps each one to its own exit code:

- UsageError (exit code 2): the caller asked for something impossible, like a
  filter wider than the spectrum or k larger than the band count.
- DataError (exit code 3): a file or an array doesn't look like it should.
- CheckFailure (exit code 1): a self-check (gradcheck) ran fine but failed.
"""


class SrlSoaError(Exception):
    """Base class of every error raised by srlsoa."""
    exit_code = 3


class UsageError(SrlSoaError):
    exit_code = 2


class DataError(SrlSoaError):
    exit_code = 3


class CheckFailure(SrlSoaError):
    exit_code = 1


# files


class MissingFile(DataError, FileNotFoundError):
    pass


class BadMagic(DataError, ValueError):
    pass


class TruncatedPayload(DataError, ValueError):
    pass


class NonFiniteValue(DataError, ValueError):
    pass


class IoFailure(DataError, OSError):
    pass


class ParseError(DataError, ValueError):
    pass


class DimMismatch(DataError, ValueError):
    pass


# arrays and indices


class ShapeMismatch(DataError, ValueError):
    pass


class IndexOutOfRange(UsageError, IndexError):
    pass


class EmptyAnnotation(DataError, ValueError):
    pass


class EmptyTrainSet(DataError, ValueError):
    pass


class EmptyConfusion(DataError, ValueError):
    pass


class DegenerateData(DataError, ValueError):
    pass


class SingularSystem(DataError, ArithmeticError):
    pass


# configuration


class BadConfig(UsageError, ValueError):
    pass


class BadKernelSize(UsageError, ValueError):
    pass


class KTooLarge(UsageError, ValueError):
    pass


# training


class NonFiniteLoss(DataError, ArithmeticError):
    """
    The loss turned into NaN or infinity. Training is aborted instead of
    patched up, the step that blew up is stored on the exception.
    """
    def __init__(self, epoch: int, batch: int, step: int, value: float):
        super().__init__(
            f"loss became {value} at epoch {epoch}, batch {batch} "
            f"(update step {step})")
        self.epoch = epoch
        self.batch = batch
        self.step = step
        self.value = value


# vim:textwidth=80:
