import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

SVG_SALT = "ptx-study"


def ranking_chart(ranking, path) -> Path:
    """
    Horizontal bar chart of aggregate scores, best on top, saved as SVG.

    The SVG hash salt is fixed and the date stamp omitted so identical
    rankings give identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = ranking.order
    scores = [float(ranking.aggregate_score[ranking.alternatives.index(a)]) for a in order]
    m = len(order)

    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 0.4 * m + 1.2))
        ax.barh(range(m), scores, color="#2a7f62")
        ax.set_yticks(range(m))
        ax.set_yticklabels([f"Experiment {a}" for a in order])
        ax.invert_yaxis()
        ax.set_xlim(0, m + 0.5)
        ax.set_xlabel("Average score (3 methods)")
        for i, score in enumerate(scores):
            ax.text(score + 0.05, i, f"{score:.2f}", va="center", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.debug("wrote %s", path)
    return path
