# UI Package

from .cli import build_parser, main, run_command
