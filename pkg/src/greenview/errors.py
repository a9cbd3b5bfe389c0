"""Exception hierarchy.

Two families matter to callers: :class:`DataError` (bad inputs, exit code 2
from the CLI) and :class:`NumericalError` (divergence, undefined metrics,
exit code 3).
"""
from __future__ import annotations


class GreenviewError(Exception):
    pass


class DataError(GreenviewError, ValueError):
    pass


class NumericalError(GreenviewError, ArithmeticError):
    pass


class CatalogError(DataError):
    pass


class UnknownColor(DataError):
    def __init__(self, color, position):
        self.color = tuple(int(v) for v in color)
        self.position = tuple(int(v) for v in position)
        super().__init__(f"unknown label color {self.color} at (row, col) {self.position}")


class UnmappedClass(DataError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"class index {self.index} has no entry in the remap table")


class EmptyImage(DataError):
    def __init__(self, msg="label map has no valid (non-void) pixels"):
        super().__init__(msg)


class ShapeMismatch(DataError):
    pass


class UnpairedRecord(DataError):
    pass


class EmptyList(DataError):
    pass


class InvalidSpec(DataError):
    pass


class MissingLabel(DataError):
    def __init__(self, image_id):
        self.image_id = image_id
        super().__init__(f"no label file for image {image_id!r}")


class DuplicateId(DataError):
    def __init__(self, image_id):
        self.image_id = image_id
        super().__init__(f"duplicate image id {image_id!r}")


class SplitOverlap(DataError):
    def __init__(self, image_id, first, second):
        self.image_id = image_id
        super().__init__(f"image {image_id!r} appears in both {first!r} and {second!r} splits")


class NonFiniteInput(NumericalError):
    pass


class UndefinedIoU(NumericalError):
    pass


class DivergenceDetected(NumericalError):
    def __init__(self, epoch, value):
        self.epoch = int(epoch)
        self.value = value
        super().__init__(f"training loss became non-finite ({value}) at epoch {self.epoch}")
