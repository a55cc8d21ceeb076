from rich.align import Align
from rich.panel import Panel
from rich.text import Text

from ui.base_ui import BaseUI


class ConsoleUI(BaseUI):
    def display_welcome(self):
        """Banner shown once per command."""
        title = Text()
        title.append("DUTY ", style="bold yellow")
        title.append("SIEVE", style="bold cyan")

        track = Text("  ═══╤═══════╤═══════╤═══════╤═══  \n", style="bright_blue")
        subtitle = Text("learned graph reduction for crew scheduling", style="bright_white")

        panel = Panel(
            Align.center(Text.assemble(title, "\n", track, subtitle)),
            border_style="bright_blue",
            padding=(1, 2)
        )
        self.console.print(panel)
