from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True, order=True)
class Diagnostic:
    """
    One analysis anomaly that lowers confidence without stopping the run.

    code is a short stable identifier (e.g. "unresolved-jump"); detail is free text;
    contract is the lowercase address the anomaly belongs to, when known.
    """

    code: str
    detail: str = ""
    contract: Optional[str] = None

    def to_dict(self):
        return {"code": self.code, "detail": self.detail, "contract": self.contract}
