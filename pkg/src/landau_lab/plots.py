"""SVG plots of run series, rendered off-screen."""

from __future__ import annotations

import io
import logging
from typing import Dict, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .utils import setup_logging  # noqa: E402


LOGGER = logging.getLogger(__name__)
setup_logging()

# fixed element ids and no timestamp, so equal data gives equal bytes
plt.rcParams["svg.hashsalt"] = "landau-lab"
plt.rcParams["svg.fonttype"] = "none"


def line_plot_svg(
	title: str,
	x: Sequence[float],
	series: Mapping[str, Sequence[float]],
	xlabel: str = "t",
	ylabel: str = "",
	logy: bool = False,
) -> str:
	fig, ax = plt.subplots(figsize=(6.4, 4.0))
	x = np.asarray(x, dtype=float)
	for label, values in series.items():
		values = np.asarray(values, dtype=float)
		if logy:
			values = np.where(values > 0, values, np.nan)
		ax.plot(x, values, marker="o", markersize=3, label=label)
	if logy:
		ax.set_yscale("log")
	ax.set_title(title)
	ax.set_xlabel(xlabel)
	ax.set_ylabel(ylabel)
	ax.grid(True, alpha=0.3)
	if series:
		ax.legend()
	buffer = io.StringIO()
	fig.savefig(buffer, format="svg", bbox_inches="tight", metadata={"Date": None})
	plt.close(fig)
	return buffer.getvalue()


def norm_decay_svg(rows: Sequence[Mapping[str, float]]) -> str:
	"""sup, L¹ and weighted L² of a solve against time."""

	times = [row["t"] for row in rows]
	series: Dict[str, list] = {name: [row[name] for row in rows] for name in ("sup", "l1", "l2_theta")}
	return line_plot_svg("Norms of the forward solve", times, series, ylabel="norm", logy=True)


def margin_svg(times: Sequence[float], lhs: Sequence[float], rhs: Sequence[float]) -> str:
	"""Both sides of the macroscopic control inequality."""

	return line_plot_svg("Macroscopic control", times, {"∫‖Pf‖²_σ": lhs, "η + C∫‖(I−P)f‖²_σ": rhs}, ylabel="value")


def interface_svg(offsets: Sequence[float], a_jumps: Sequence[float], b_jumps: Sequence[float]) -> str:
	"""One-sided jumps of the transformed coefficients against the interface offset."""

	return line_plot_svg(
		"Interface jumps of the flattened coefficients",
		offsets,
		{"𝔸 jump": a_jumps, "𝔹 jump": b_jumps},
		xlabel="offset",
		ylabel="max jump",
		logy=True,
	)
