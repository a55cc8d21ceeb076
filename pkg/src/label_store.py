from pathlib import Path
from typing import List, Sequence, Union
import logging

import pandas as pd

from models import LabeledInstance

LABEL_FORMAT_TAG = "labels-v1"
INDEX_COLUMNS = ["instance", "label_file", "lp_obj", "ip_obj", "connections", "positives"]

logger = logging.getLogger(__name__)


class LabelStore:
    """Reads and writes valid-edge label files and the dataset index.

    A label file holds the format tag, the instance path, then one
    `edge_id,label` row per connection edge of that instance.
    """

    @staticmethod
    def write(path: Union[str, Path], instance_path: str,
              edge_ids: Sequence[int], labels: Sequence[int]) -> None:
        if len(edge_ids) != len(labels):
            raise ValueError(f"{len(labels)} labels for {len(edge_ids)} edges")
        df = pd.DataFrame({"edge_id": list(edge_ids), "label": list(labels)})
        with open(path, "w", newline="") as f:
            f.write(f"{LABEL_FORMAT_TAG}\n{instance_path}\n")
            df.to_csv(f, index=False)

    @staticmethod
    def read(path: Union[str, Path]) -> LabeledInstance:
        """Load one label file; the instance path is taken from its second line."""
        with open(path) as f:
            tag = f.readline().strip()
            instance_path = f.readline().strip()
        if tag != LABEL_FORMAT_TAG:
            raise ValueError(f"{path}: expected format tag {LABEL_FORMAT_TAG!r}, found {tag!r}")
        df = pd.read_csv(path, skiprows=2)
        if list(df.columns) != ["edge_id", "label"]:
            raise ValueError(f"{path}: expected columns edge_id,label, found {','.join(df.columns)}")
        if not df["label"].isin([0, 1]).all():
            raise ValueError(f"{path}: labels must be 0 or 1")
        item = LabeledInstance(
            instance_path=instance_path,
            label_path=str(path),
            edge_ids=df["edge_id"].astype(int).tolist(),
            labels=df["label"].astype(int).tolist(),
        )
        item.validate()
        return item

    @staticmethod
    def write_index(path: Union[str, Path], items: Sequence[LabeledInstance]) -> pd.DataFrame:
        df = pd.DataFrame(
            [
                {
                    "instance": item.instance_path,
                    "label_file": item.label_path,
                    "lp_obj": item.lp_objective,
                    "ip_obj": item.ip_objective,
                    "connections": len(item.labels),
                    "positives": int(sum(item.labels)),
                }
                for item in items
            ],
            columns=INDEX_COLUMNS,
        )
        df.to_csv(path, index=False)
        return df

    @staticmethod
    def from_index(path: Union[str, Path]) -> List[LabeledInstance]:
        """Load every label file listed in a dataset index."""
        df = pd.read_csv(path)
        items = []
        for _, row in df.iterrows():
            item = LabelStore.read(row["label_file"])
            item.lp_objective = float(row["lp_obj"])
            item.ip_objective = float(row["ip_obj"])
            items.append(item)
        logger.debug(f"Loaded {len(items)} labeled instances from {path}")
        return items

    @staticmethod
    def from_dir(directory: Union[str, Path]) -> List[LabeledInstance]:
        """Index file if present, otherwise every *.labels file in name order."""
        directory = Path(directory)
        index = directory / "dataset.csv"
        if index.exists():
            return LabelStore.from_index(index)
        return [LabelStore.read(p) for p in sorted(directory.glob("*.labels"))]
