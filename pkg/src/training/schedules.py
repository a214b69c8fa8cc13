import numpy as np
from pydantic import BaseModel, Field, model_validator


class TimeSchedule(BaseModel):
    """
    Ordered sample times on [0, 1] driving one generated sequence.

    Single-axis schedules only carry `content`; content/style schedules carry a second,
    independently sampled `style` axis. Both axes are ascending with endpoints pinned to 0 and 1.
    """
    content: tuple[float, ...] = Field(..., description="Time samples along the content (or only) axis")
    style: tuple[float, ...] | None = Field(default=None, description="Time samples along the style axis")

    @model_validator(mode='after')
    def check_axes(self) -> 'TimeSchedule':
        for axis_name, axis in (('content', self.content), ('style', self.style)):
            if axis is None:
                continue
            if len(axis) < 2:
                raise ValueError(f"{axis_name} axis needs k >= 2 samples, got {len(axis)}")
            if axis[0] != 0.0 or axis[-1] != 1.0:
                raise ValueError(f"{axis_name} axis endpoints must be exactly 0 and 1, got {axis[0]}, {axis[-1]}")
            if any(b < a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"{axis_name} axis must be ascending")
        if self.style is not None and len(self.style) != len(self.content):
            raise ValueError(f"content and style axes differ in length: {len(self.content)} vs {len(self.style)}")
        return self

    @property
    def k(self) -> int:
        return len(self.content)

    @property
    def dual(self) -> bool:
        return self.style is not None

    @property
    def style_times(self) -> tuple[float, ...]:
        """ Times driving the appearance blend: the style axis when present, the content axis otherwise. """
        return self.style if self.style is not None else self.content

    def increments(self) -> list[float]:
        return [b - a for a, b in zip(self.content, self.content[1:])]


def uniform_schedule(k: int) -> TimeSchedule:
    """ Evenly spaced t_i = (i - 1) / (k - 1). """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    times = [i / (k - 1) for i in range(k)]
    times[-1] = 1.0
    return TimeSchedule(content=tuple(times))


def cs_schedule(k: int, rng: np.random.Generator) -> TimeSchedule:
    """ Content/style schedule: k - 2 i.i.d. uniform interior points per axis, sorted, endpoints pinned. """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")

    def axis() -> tuple[float, ...]:
        interior = np.sort(rng.uniform(0.0, 1.0, size=k - 2))
        return (0.0, *(float(t) for t in interior), 1.0)

    content = axis()
    return TimeSchedule(content=content, style=axis())


def grid_schedule(size: int) -> list[tuple[float, float]]:
    """ (content, style) coordinates of a size x size grid, cell (i, j) at (i / (size - 1), j / (size - 1)). """
    if size < 2:
        raise ValueError(f"grid size must be >= 2, got {size}")
    steps = [i / (size - 1) for i in range(size)]
    return [(tc, ts) for tc in steps for ts in steps]
