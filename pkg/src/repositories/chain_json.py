import json
from pathlib import Path

from src.models.chain import FiniteMarkovChain
from src.models.metric_space import Distribution, FiniteMetricSpace


class ChainRepository:
    """
    JSON files holding chains or pairs of distributions.

    Chain files look like {"states": [{"label", "coords"}], "kernel": [[...]]};
    pair files replace the kernel with "p" and "q" weight lists. Either may
    carry an explicit "dist" matrix instead of coordinates.
    """

    def __init__(self, base_dir=None):
        self.base_dir = Path(base_dir) if base_dir is not None else None

    def _resolve(self, path) -> Path:
        path = Path(path)
        if self.base_dir is not None and not path.is_absolute():
            path = self.base_dir / path
        return path

    def _read(self, path) -> dict:
        path = self._resolve(path)
        with path.open(encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ValueError(f"{path} must hold a JSON object")
        return data

    def _write(self, path, data: dict) -> Path:
        path = self._resolve(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
            f.write("\n")
        return path

    def load_chain(self, path) -> FiniteMarkovChain:
        return FiniteMarkovChain.from_dict(self._read(path))

    def save_chain(self, path, chain: FiniteMarkovChain) -> Path:
        return self._write(path, chain.to_dict())

    def load_pair(self, path) -> tuple[Distribution, Distribution]:
        data = self._read(path)
        missing = [key for key in ("p", "q") if key not in data]
        if missing:
            raise ValueError(f"Pair file lacks {', '.join(missing)}")
        space = FiniteMetricSpace.from_dict(data)
        return Distribution(space, data["p"]), Distribution(space, data["q"])

    def save_pair(self, path, p: Distribution, q: Distribution) -> Path:
        if not p.space.compatible_with(q.space):
            raise ValueError("Distributions live on different spaces")
        data = p.space.to_dict()
        data["p"] = p.to_dict()["weights"]
        data["q"] = q.to_dict()["weights"]
        return self._write(path, data)
