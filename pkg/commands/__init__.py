from .simulate_commands import register as simulate_commands
from .render_commands import register as render_commands
from .validate_commands import register as validate_commands
from .bench_commands import register as bench_commands
from .runs_commands import register as runs_commands

ALL_COMMANDS = [simulate_commands, render_commands, validate_commands, bench_commands, runs_commands]
