"""
Console, logging and progress display.

Library modules log through the standard logging module; the CLI and the web
app route those records through rich so they share one look with the console
output.
"""

import logging
import time
from typing import Dict, Iterable, List, Mapping, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.table import Table

console = Console(stderr=True)


def setup_logging(verbose: bool = False) -> None:
    """Install a rich handler on the root logger."""
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


class RunProgress:
    """Tracks entries through a batch run and drives a progress bar."""

    def __init__(self, total_entries: int = 0, show_details: bool = True):
        self.total_entries = total_entries
        self.processed_entries = 0
        self.failed_entries = 0
        self.show_details = show_details
        self.start_time = time.time()
        self._progress: Optional[Progress] = None
        self._task = None

    def __enter__(self) -> "RunProgress":
        if self.show_details and self.total_entries:
            self._progress = Progress(
                SpinnerColumn(),
                TextColumn("[blue]{task.description}"),
                BarColumn(),
                MofNCompleteColumn(),
                TimeElapsedColumn(),
                TimeRemainingColumn(),
                console=console,
                transient=True,
            )
            self._progress.start()
            self._task = self._progress.add_task("Processing entries", total=self.total_entries)
        return self

    def __exit__(self, *exc) -> None:
        if self._progress is not None:
            self._progress.stop()
            self._progress = None
        self.finish_all()

    def finish_entry(self, entry_id: str, success: bool, message: str = "") -> None:
        """Mark an entry as completed."""
        self.processed_entries += 1
        if not success:
            self.failed_entries += 1
            if self.show_details:
                console.print(f"[red]✗ {entry_id}: {message}[/red]")
        if self._progress is not None:
            self._progress.advance(self._task)

    @property
    def succeeded(self) -> int:
        return self.processed_entries - self.failed_entries

    def finish_all(self) -> None:
        elapsed = time.time() - self.start_time
        if not self.show_details:
            return
        colour = "green" if self.failed_entries == 0 else "yellow"
        console.print(f"[{colour}]Processed {self.succeeded}/{self.processed_entries} entries "
                      f"in {elapsed:.1f}s[/{colour}]")


def descriptor_table(descriptors: Mapping[str, object], title: str = "Descriptors") -> Table:
    """Two-column table of a serialized DescriptorSet."""
    table = Table(title=title)
    table.add_column("Descriptor", style="cyan")
    table.add_column("Category", style="bold")
    table.add_column("Value", style="dim")
    for key in ("loudness", "pitch", "reverb", "noise", "brightness", "fade", "duration"):
        category = descriptors.get(key)
        value = descriptors.get(f"{key}_value")
        table.add_row(key,
                      "-" if category is None else str(category),
                      "-" if value is None else f"{value:.2f}")
    return table


def alignment_table(rows: Iterable[Mapping[str, object]], columns: List[str],
                    title: str = "Measured values by prompted category") -> Table:
    """Descriptor/subcategory rows with one 'mean ± std (n)' cell per model column."""
    table = Table(title=title)
    table.add_column("Category", style="cyan")
    table.add_column("Sub category", style="bold")
    for name in columns:
        table.add_column(name, justify="right")
    for row in rows:
        cells = []
        for name in columns:
            stats = row.get(name)
            if not stats:
                cells.append("-")
            else:
                cells.append(f"{stats['mean']:.2f} ± {stats['stddev']:.2f} ({stats['count']})")
        table.add_row(str(row["descriptor"]), str(row["subcategory"]), *cells)
    return table


def histogram_table(histograms: Dict[str, Dict[str, int]], title: str = "Category histograms") -> Table:
    table = Table(title=title)
    table.add_column("Descriptor", style="cyan")
    table.add_column("Category", style="bold")
    table.add_column("Count", justify="right")
    for key, counts in histograms.items():
        for category, count in counts.items():
            table.add_row(key, category, str(count))
    return table
