import os
import logging
import argparse
from dataclasses import dataclass, field
from typing import Callable

from dotenv import load_dotenv, find_dotenv


_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_BLAS_THREAD_VARS: tuple[str, ...] = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

if find_dotenv() != "":
    load_dotenv(find_dotenv())


def _threads_from_env(raw_value: str | None) -> int:
    """Parse GENSHIN_THREADS; anything unusable falls back to one thread."""
    if not raw_value:
        return 1
    try:
        threads = int(raw_value)
    except ValueError:
        return 1
    return max(threads, 1)


GENSHIN_THREADS = _threads_from_env(os.getenv("GENSHIN_THREADS"))
GENSHIN_LOG_LEVEL = (os.getenv("GENSHIN_LOG_LEVEL") or "INFO").upper()

# BLAS reads these once when numpy loads, so this module is imported first by the CLI.
for _var in _BLAS_THREAD_VARS:
    os.environ.setdefault(_var, str(GENSHIN_THREADS))


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or GENSHIN_LOG_LEVEL), format=_LOG_FORMAT, force=True)


Handler = Callable[[argparse.Namespace], int]
ArgumentsHook = Callable[[argparse.ArgumentParser], None]


@dataclass
class Command:
    name: str
    help: str
    handler: Handler
    arguments: ArgumentsHook | None = None


class UsageError(Exception):
    """Raised instead of argparse's default exit so usage failures map to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class CommandRegistry:
    """Collects CLI subcommands registered by the modules under src/tools."""

    name: str
    description: str
    commands: dict[str, Command] = field(default_factory=dict)
    common_arguments: list[ArgumentsHook] = field(default_factory=list)

    def command(self, name: str, help: str, arguments: ArgumentsHook | None = None) -> Callable[[Handler], Handler]:
        def decorator(handler: Handler) -> Handler:
            if name in self.commands:
                raise ValueError(f"Command '{name}' registered twice.")
            self.commands[name] = Command(name=name, help=help, handler=handler, arguments=arguments)
            return handler
        return decorator

    def common(self, hook: ArgumentsHook) -> ArgumentsHook:
        self.common_arguments.append(hook)
        return hook

    def build_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(prog=self.name, description=self.description)
        subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.help, description=command.help)
            for hook in self.common_arguments:
                hook(sub)
            if command.arguments is not None:
                command.arguments(sub)
            sub.set_defaults(handler=command.handler)
        return parser


_DESCRIPTION = """Train, evaluate and inspect GEnSHIN spatio-temporal forecasting models."""

cli = CommandRegistry(name="genshin", description=_DESCRIPTION)
