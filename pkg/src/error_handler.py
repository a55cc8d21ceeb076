import sys
import logging
import traceback
from typing import Optional, Callable, Any, Dict
from functools import wraps
from rich.console import Console
from rich.panel import Panel

# Hints shown under the error panel, keyed by exception class name
HINTS: Dict[str, str] = {
    'ParseError': "The instance file is not a valid rcsp-v1 document; regenerate it with `generate`.",
    'CycleDetected': "Instance edges must point forward in time.",
    'GenerationExhausted': "Widen the node target or the train range in the generator config.",
    'VersionMismatch': "The checkpoint was written by an incompatible version; retrain the model.",
    'CorruptCheckpoint': "The checkpoint file is damaged; retrain or restore it.",
    'EmptyDataset': "Run `label` first and point `train --data` at its output directory.",
    'NumericalFailure': "The LP solver stalled; rerun with DEBUG logging and keep the instance.",
    'FileNotFoundError': "Check the paths given on the command line.",
}

EXIT_FAILURE = 1
EXIT_INTERRUPTED = 130


class ErrorHandler:
    """Renders uncaught exceptions, logs them and exits nonzero"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console(stderr=True)
        self.logger = logging.getLogger(__name__)

    def handle_exception(self, e: BaseException, context: str = "") -> None:
        error_type = type(e).__name__
        hint = HINTS.get(error_type)

        detailed_msg = f"""
[bold red]Error Type:[/] {error_type}
[bold red]Context:[/] {context}
[bold red]Details:[/] {e}
"""
        if hint:
            detailed_msg += f"\n[bold yellow]Hint:[/] {hint}\n"

        self.logger.error(f"Error in {context}: {error_type}: {e}")
        self.logger.debug("".join(traceback.format_exception(type(e), e, e.__traceback__)))

        self.console.print(Panel(
            detailed_msg,
            title="[bold red]Duty Sieve failed[/]",
            border_style="red"
        ))

    def shutdown(self, exit_code: int = EXIT_FAILURE) -> None:
        logging.shutdown()
        sys.exit(exit_code)

    def __call__(self, func: Callable) -> Callable:
        """Decorator for error handling"""
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            try:
                return func(*args, **kwargs)
            except KeyboardInterrupt:
                self.console.print("\n[yellow]Interrupted[/]")
                self.shutdown(EXIT_INTERRUPTED)
            except Exception as e:
                self.handle_exception(e, func.__name__)
                self.shutdown()
        return wrapper


def setup_error_handler(console: Optional[Console] = None) -> ErrorHandler:
    """Create the handler and install it as the global exception hook"""
    handler = ErrorHandler(console)

    def global_exception_handler(exctype, value, tb):
        if issubclass(exctype, KeyboardInterrupt):
            handler.shutdown(EXIT_INTERRUPTED)
        handler.handle_exception(value, "Global")
        handler.shutdown()

    sys.excepthook = global_exception_handler
    return handler
