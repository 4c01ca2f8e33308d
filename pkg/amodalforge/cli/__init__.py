from amodalforge.cli.cli import CommandConfig, main, parse_args, build_parser, parse_partition, cmd_generate, cmd_stats, cmd_eval, cmd_inspect, render_overlay, SUBCOMMANDS
