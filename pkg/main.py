"""
Stein OLO Harness - Command-line entry point

Loads the flat key-value configuration, applies command-line overrides,
runs one command and writes its table as CSV or JSON.

Exit codes: 0 success, 1 configuration or file error, 2 numerical or
runtime fault, 3 bound violation detected.
"""

import argparse
import sys
from typing import Any, Dict, List, Optional

import structlog
from pydantic import ValidationError

from config.config import config
from config.experiment_config import LOG_LEVELS, Command, LearnerName, OutputFormat
from core.exceptions import BooleanProtocolError, GameFault, GameOver, ScheduleViolation
from core.targets import TargetKind
from services.adversary_service import AdversaryKind
from services.experiment_service import ExperimentService
from utils.logging_config import configure_logging
from utils.metrics import export_metrics

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2
EXIT_VIOLATION = 3

logger = structlog.get_logger(__name__)

# argparse destination -> configuration key
OVERRIDE_KEYS = {
    "command": "command",
    "learner": "learner",
    "target": "target",
    "alpha": "alpha",
    "k": "k",
    "adversary": "adversary",
    "adversary_param": "adversary_param",
    "drift": "drift",
    "script": "script",
    "T": "T",
    "seed": "seed",
    "trials": "trials",
    "out": "out",
    "format": "format",
    "alpha_grid": "alpha_grid",
    "u_grid": "u_grid",
    "eps_grid": "eps_grid",
    "workers": "workers",
    "chunk_size": "chunk_size",
    "force_generic": "force_generic",
    "metrics_out": "metrics_out",
    "log_level": "log_level",
    "hermite_nodes": "quadrature.hermite_nodes",
    "legendre_nodes": "quadrature.legendre_nodes",
}


def _choices(enum_type: Any) -> List[str]:
    return [member.value for member in enum_type]


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments. Every flag defaults to None so that only
    given flags override the configuration file.

    :param argv: Arguments without the program name; sys.argv when omitted
    :return: Parsed arguments
    """
    parser = argparse.ArgumentParser(
        description="Stein's-method online linear optimization experiments"
    )
    parser.add_argument(
        "-c", "--config", default=None, help="Path to a key=value configuration file"
    )
    parser.add_argument("-l", "--log-level", choices=LOG_LEVELS, default=None, help="Logging level")
    parser.add_argument("--command", choices=_choices(Command), default=None)
    parser.add_argument("--learner", choices=_choices(LearnerName), default=None)
    parser.add_argument(
        "--target",
        choices=[kind.value for kind in TargetKind if kind is not TargetKind.CUSTOM],
        default=None,
    )
    parser.add_argument(
        "--alpha", type=float, default=None, help="Scale α; learners tune to α/√T"
    )
    parser.add_argument("--k", type=float, default=None, help="Absolute target scale")
    parser.add_argument("--adversary", choices=_choices(AdversaryKind), default=None)
    parser.add_argument(
        "--adversary-param", type=float, default=None, help="Bias, width, drift or noise level"
    )
    parser.add_argument("--drift", type=float, default=None, help="Mean of the gaussian adversary")
    parser.add_argument("--script", default=None, help="Comma list of gradients")
    parser.add_argument("--T", dest="T", type=int, default=None, help="Horizon")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--out", default=None, help="Output path, '-' for stdout")
    parser.add_argument("--format", choices=_choices(OutputFormat), default=None)
    parser.add_argument("--alpha-grid", default=None, help="Comma list or start:stop:count")
    parser.add_argument("--u-grid", default=None, help="Comma list or start:stop:count")
    parser.add_argument("--eps-grid", default=None, help="Comma list or start:stop:count")
    parser.add_argument("--workers", type=int, default=None, help="Threads for trial chunks")
    parser.add_argument("--chunk-size", type=int, default=None, help="Games per batch")
    parser.add_argument(
        "--force-generic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Use the quadrature path for every target",
    )
    parser.add_argument("--hermite-nodes", type=int, default=None)
    parser.add_argument("--legendre-nodes", type=int, default=None)
    parser.add_argument(
        "--metrics-out", default=None, help="Write Prometheus text metrics to this path"
    )
    return parser.parse_args(argv)


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = vars(args)
    return {key: values.get(dest) for dest, key in OVERRIDE_KEYS.items()}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    :param argv: Arguments without the program name
    :return: Process exit code
    """
    args = parse_arguments(argv)
    configure_logging(args.log_level or "WARNING")

    try:
        config.load_config(args.config)
        config.apply_overrides(collect_overrides(args))
        settings = config.experiment()
    except (ValidationError, ValueError, OSError) as e:
        logger.error("invalid configuration", error=str(e))
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    configure_logging(settings.log_level)
    service = ExperimentService(settings)
    try:
        result = service.execute()
        service.write(result)
        if settings.metrics_out:
            export_metrics(settings.metrics_out)
    except (GameFault, ArithmeticError) as e:
        logger.error("numerical fault", error=str(e))
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_FAULT
    except (ScheduleViolation, BooleanProtocolError, GameOver) as e:
        # Raised mid-game, after the configuration was accepted
        logger.error("game protocol fault", error=str(e), kind=type(e).__name__)
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_FAULT
    except (ValueError, OSError) as e:
        logger.error("command failed", error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.critical("unhandled exception", error=str(e))
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_FAULT

    if result.violations:
        print(f"bound violations: {result.violations}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
