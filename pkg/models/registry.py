from typing import Iterable, List, Mapping, Tuple

from models.errors import UnknownClass

# Anomaly taxonomy ids (lower case, as they appear in replay records).
FIGHT = "fight"
GUNSHOT = "gunshot"
FIRE = "fire"
NORMAL = "normal"
ABNORMAL = "abnormal"

# Key-object ids.
FIREARM = "firearm"
FLAME = "flame"
PERSON = "person"


class ClassRegistry:
    """
    Ordered registry of class ids keyed by string.

    Insertion order is the tie-break order used by argmax and NMS. When
    `pinned_last` is set, that id always stays at the end of the order, so
    later registrations are inserted in front of it.
    """

    def __init__(self, name: str, class_ids: Iterable[str], pinned_last: str = ""):
        self.name = name
        self.pinned_last = pinned_last
        self._ids: List[str] = []
        for class_id in class_ids:
            self.register(class_id)
        if pinned_last and pinned_last not in self._ids:
            self._ids.append(pinned_last)

    def register(self, class_id: str) -> "ClassRegistry":
        class_id = class_id.strip().lower()
        if not class_id:
            raise ValueError("Class id must be a non-empty string.")
        if class_id in self._ids:
            return self
        if self.pinned_last and self.pinned_last in self._ids and class_id != self.pinned_last:
            self._ids.insert(self._ids.index(self.pinned_last), class_id)
        else:
            self._ids.append(class_id)
        return self

    def ordered(self) -> Tuple[str, ...]:
        return tuple(self._ids)

    def index(self, class_id: str) -> int:
        try:
            return self._ids.index(class_id)
        except ValueError:
            raise UnknownClass(class_id, self.name) from None

    def require(self, class_id: str) -> str:
        """Returns the canonical id or raises UnknownClass."""
        canonical = str(class_id).strip().lower()
        if canonical not in self._ids:
            raise UnknownClass(class_id, self.name)
        return canonical

    def __contains__(self, class_id: object) -> bool:
        return isinstance(class_id, str) and class_id.strip().lower() in self._ids

    def __iter__(self):
        return iter(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    def __repr__(self) -> str:
        return f"ClassRegistry({self.name!r}, {self._ids!r})"


def default_anomaly_registry() -> ClassRegistry:
    """Fight, Gunshot, Fire, then Normal (registered last for argmax tie-breaks)."""
    return ClassRegistry("anomaly", [FIGHT, GUNSHOT, FIRE], pinned_last=NORMAL)


def default_object_registry() -> ClassRegistry:
    return ClassRegistry("object", [FIREARM, FLAME, PERSON])


def binary_registry() -> ClassRegistry:
    return ClassRegistry("binary", [ABNORMAL], pinned_last=NORMAL)


def registry_binary_collapse(label: str, registry: ClassRegistry = None) -> str:
    """
    Collapses a multi-class label onto {Abnormal, Normal}.

    Abnormal is accepted as input so the collapse is idempotent.
    """
    registry = registry or default_anomaly_registry()
    if label == ABNORMAL:
        return ABNORMAL
    canonical = registry.require(label)
    return NORMAL if canonical == NORMAL else ABNORMAL


def argmax_label(distribution: Mapping[str, float], registry: ClassRegistry) -> str:
    """Argmax over the registry order; the first id wins ties."""
    best_label, best_value = None, None
    for class_id in registry.ordered():
        value = distribution.get(class_id)
        if value is None:
            continue
        if best_value is None or value > best_value:
            best_label, best_value = class_id, value
    if best_label is None:
        raise UnknownClass(",".join(distribution.keys()) or "<empty>", registry.name)
    return best_label
