"""Phase classification, particle analytics, and meshing for clinker micrographs."""

from .annotations import (
    AnnotatedImage,
    ParticleInstance,
    RleCounts,
    SplitPlan,
    export_coco,
    import_coco,
    import_labelme,
    instances_from_label_map,
    plan_split,
    rle_decode,
    rle_encode,
)
from .boosting import GbdtModel, GbdtParams, fit_gbdt
from .config import RunConfig, load_config
from .errors import ClinkerscopeError, DataError, IterationCapError
from .evaluation import (
    PrfScores,
    ThresholdSweep,
    evaluate_detections,
    f1_score,
    mask_iou,
    match_instances,
    pixel_prf,
    prf_from_labels,
    sweep_thresholds,
)
from .meshing import (
    TriMesh,
    boundary_nodes,
    conforming_delaunay,
    delaunay_triangulation,
    export_mesh_json,
    export_node_ele,
    label_triangles,
    load_mesh_json,
    phase_area_fractions,
)
from .particles import (
    ParticleStats,
    PointCountResult,
    PsdCurve,
    connected_components,
    export_particles_csv,
    export_psd_csv,
    normalize_diagonals,
    point_count,
    psd_curve,
    summarize_particles,
)
from .polygons import Polygon, mask_to_polygons, polygon_to_mask
from .raster import (
    BBox,
    BinaryMask,
    LabelMap,
    PhaseLabel,
    RasterImage,
    feature_grid,
    load_image,
    load_label_map,
    neighborhood_features,
    save_image,
    save_label_map,
    to_grayscale,
)
from .windows import (
    MowDataset,
    StratifiedWindows,
    WindowSpec,
    build_dataset,
    export_dataset_csv,
    predict_image,
    sample_windows,
    split_samples,
    train_mow_model,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedImage",
    "BBox",
    "BinaryMask",
    "ClinkerscopeError",
    "DataError",
    "GbdtModel",
    "GbdtParams",
    "IterationCapError",
    "LabelMap",
    "MowDataset",
    "ParticleInstance",
    "ParticleStats",
    "PhaseLabel",
    "PointCountResult",
    "Polygon",
    "PrfScores",
    "PsdCurve",
    "RasterImage",
    "RleCounts",
    "RunConfig",
    "SplitPlan",
    "StratifiedWindows",
    "ThresholdSweep",
    "TriMesh",
    "WindowSpec",
    "boundary_nodes",
    "build_dataset",
    "conforming_delaunay",
    "connected_components",
    "delaunay_triangulation",
    "evaluate_detections",
    "export_coco",
    "export_dataset_csv",
    "export_mesh_json",
    "export_node_ele",
    "export_particles_csv",
    "export_psd_csv",
    "f1_score",
    "feature_grid",
    "fit_gbdt",
    "import_coco",
    "import_labelme",
    "instances_from_label_map",
    "label_triangles",
    "load_config",
    "load_image",
    "load_label_map",
    "load_mesh_json",
    "mask_iou",
    "mask_to_polygons",
    "match_instances",
    "neighborhood_features",
    "normalize_diagonals",
    "phase_area_fractions",
    "pixel_prf",
    "plan_split",
    "point_count",
    "polygon_to_mask",
    "predict_image",
    "prf_from_labels",
    "psd_curve",
    "rle_decode",
    "rle_encode",
    "sample_windows",
    "save_image",
    "save_label_map",
    "split_samples",
    "summarize_particles",
    "sweep_thresholds",
    "to_grayscale",
    "train_mow_model",
]
