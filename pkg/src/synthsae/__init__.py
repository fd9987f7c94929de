"""Small-area synthetic estimation from weighted survey data."""

from .data_model import (
    CELLS,
    COLUMNS,
    DEFAULT_AREAS,
    PRESETS,
    AreaAux,
    DataError,
    DomainCell,
    ModelSpec,
    PopulationTable,
    Region,
    SurveyDataset,
    UnitRecord,
    assign_cell,
    design_vector,
    get_spec,
)

__version__ = "0.1.0"

__all__ = [
    "CELLS", "COLUMNS", "DEFAULT_AREAS", "PRESETS", "AreaAux", "DataError", "DomainCell",
    "ModelSpec", "PopulationTable", "Region", "SurveyDataset", "UnitRecord", "assign_cell",
    "design_vector", "get_spec",
]
