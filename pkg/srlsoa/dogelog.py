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
The log format of srlsoa. Small on purpose: the library only ever says what
it's doing right now, there are no per-module loggers to configure.

It has two modes. The normal mode looks like this:

:: Training 200 bands, Q = 3, 50 epochs
// epoch 12: loss 4.2011 (fidelity 3.1290, sparsity 1.0721)
## Can't read cube.hsic: wrong magic bytes

While the extensive mode, used when logging into a file, looks like this:

[2021.06.02 21:56:29] [DEBUG //] epoch 12: loss 4.2011 ...
[2021.06.02 22:11:09] [INFO  ::] Wrote ranking to out/ranking.csv
[2021.06.02 22:11:57] [ERROR ##] Can't read cube.hsic: wrong magic bytes

Nothing is printed below the INFO level unless `init_debug` or `init_file`
was called.
"""
import atexit
import datetime
import enum
import sys
from typing import Optional

from PIL.ImageColor import getrgb


COLOR_START = "\033[38;2;{0};{1};{2}m"
RESET = "\033[0m"

CYAN = COLOR_START.format(*getrgb("#00ffff"))
VIOLET = COLOR_START.format(*getrgb("#5f00ff"))
ORANGE = COLOR_START.format(*getrgb("#ff4b00"))

BAR_WIDTH = 23


class Mode(enum.Enum):
    """
    The mode the formatter should be in. See the module notes for details.
    NONE is just the normal mode without colors.
    """
    NONE = 1
    NORMAL = 2
    EXTENSIVE = 3


class Level(enum.Enum):
    DEBUG = 1
    INFO = 2
    ERROR = 3


DEBUG = Level.DEBUG
INFO = Level.INFO
ERROR = Level.ERROR

_MARKERS = {
    DEBUG: ("//", VIOLET, "DEBUG"),
    INFO: ("::", CYAN, "INFO "),
    ERROR: ("##", ORANGE, "ERROR"),
}


mode = Mode.NORMAL
filterlevel = INFO
logfile = None
progress = None


def get_formatted_datetime() -> str:
    """
    Returns the current time formatted as YYYY.mm.dd HH:MM:SS.
    """
    return datetime.datetime \
        .now() \
        .strftime("%Y.%m.%d %H:%M:%S")


def format_level(level: Level) -> str:
    """
    Converts the given level into the prefix of a log line.
    """
    marker, color, name = _MARKERS[level]
    if mode == Mode.NONE:
        return marker
    elif mode == Mode.NORMAL:
        return f"{color}{marker}{RESET}"
    return f"[{get_formatted_datetime()}] [{name} {marker}]"


def close_if_needed():
    """Closes the logfile if needed."""
    global logfile
    if logfile is not None:
        logfile.close()
        logfile = None


def _configure(new_mode: Mode, new_level: Level, file: Optional[str] = None):
    global mode
    global filterlevel
    global logfile

    close_if_needed()
    mode = new_mode
    filterlevel = new_level
    if file is not None:
        logfile = open(file, "a", encoding="utf-8")
        logfile.write(
            f"   >>> NEW LOG BEGINS AT {get_formatted_datetime()} <<<\n")

    atexit.register(close_if_needed)


def init():
    """
    Initializes logging using the INFO level, e.g. DEBUG messages don't get
    logged. This is the default if no other initialize function is called.
    You could also use this function to reset the settings to their default.
    """
    _configure(Mode.NORMAL, INFO)


def init_debug():
    """
    Initializes logging using the DEBUG level and normal terminal escape
    codes. Training prints its per-epoch losses at this level.
    """
    _configure(Mode.NORMAL, DEBUG)


def init_colorless():
    """
    Initializes logging using the INFO level, but with no colors.
    """
    _configure(Mode.NONE, INFO)


def init_file(file: str):
    """
    Initializes logging using the DEBUG level, and appends to the given file
    instead of writing to the terminal.
    """
    _configure(Mode.EXTENSIVE, DEBUG, file)


def is_enabled(level: Level) -> bool:
    """Whether a message of the given level would be written anywhere."""
    return level.value >= filterlevel.value


def log(message: str, level: Level):
    """
    Logs to stdout and to stderr for the ERROR level by default, but instead
    logs to the given file if you used `init_file` to initialize logging.
    """
    message = str(message)
    if not is_enabled(level):
        return

    # multi-line messages get their continuation lines indented below the
    # first one:
    #
    # :: Ranking done, top bands:
    #    12, 40, 3
    formatted_info = format_level(level)
    splitted_message = iter(message.split("\n"))

    # the color escape codes don't take up any space on the terminal
    if mode == Mode.NORMAL:
        indent = 2
    else:
        indent = len(formatted_info)
    indent = " " * indent

    logentry = [f"{formatted_info} {next(splitted_message)}"]
    for part in splitted_message:
        logentry.append(f"{indent} {part}")
    logentry = "\n".join(logentry)

    if logfile is None:
        if progress is None:
            target = sys.stderr if level == ERROR else sys.stdout
        else:
            # stdout and stderr might not be in sync, which would tear the
            # progress bar apart
            target = sys.stdout
            progress._delete_on_stdout()
            sys.stdout.flush()
            progress.last_print_len = 0
    else:
        target = logfile

    print(logentry, file=target)

    if logfile is None and progress is not None:
        progress._redraw()


def debug(message: str):
    """
    Logs with the DEBUG level. Hidden unless initialized with `init_debug` or
    `init_file`.
    """
    log(message, DEBUG)


def info(message: str):
    """
    Logs with the INFO level.
    """
    log(message, INFO)


def error(message: str):
    """
    Logs with the ERROR level. This goes to stderr, or to the logfile if
    logging has been initialized with `init_file`.
    """
    log(message, ERROR)


class Progress:
    """
    A small live progress bar, used for the training epochs.

    The message will be displayed before the progress bar, and right after that
    progress/end. As an example:

    :: Training  12/50 [/////——————————————————]

    The bar is only drawn while logging at DEBUG level, otherwise stack() and
    finish() do nothing. Call .finish() once done, so logging works normally
    again.
    """
    def __init__(self, message: str, end: int):
        global progress

        self.message = message
        self.end = end
        self.current = 0
        self.last_print_len = 0
        self.active = is_enabled(DEBUG) and end > 0

        if self.active:
            progress = self

    def _delete_on_stdout(self):
        if self.last_print_len == 0 or logfile is not None:
            return
        sys.stdout.write("\b" * self.last_print_len)
        sys.stdout.write(" " * self.last_print_len)
        sys.stdout.write("\b" * self.last_print_len)

    def _redraw(self):
        self._delete_on_stdout()

        prefix = format_level(INFO)
        # right-justified so the bar doesn't wander around
        current = str(self.current).rjust(len(str(self.end)))
        fraction = f"{current}/{self.end}"

        filled_count = min(BAR_WIDTH, BAR_WIDTH * self.current // self.end)
        bar = f"[{'/' * filled_count}{'—' * (BAR_WIDTH - filled_count)}]"

        if logfile is not None:
            # the file only gets the plain fraction, once per redraw
            print(f"{prefix} {self.message} {fraction}", file=logfile)
        else:
            status = f"{prefix} {self.message} {fraction} {bar}"
            sys.stdout.write(status)
            sys.stdout.flush()
            self.last_print_len = len(status)

    def stack(self, amount: int = 1):
        """Increases the progress bar by the given amount and redraws it."""
        if not self.active:
            return
        self.current += amount
        self._redraw()

    def finish(self):
        """Finishes the progress bar and enables logging again."""
        global progress

        if not self.active:
            return
        progress = None
        self.active = False

        if logfile is None:
            sys.stdout.write("\n")
            sys.stdout.flush()
            self.last_print_len = 0


# vim:textwidth=80:
