from softgrasp.softbody.mesh import (
    MaterialParams,
    SoftBodyMesh,
    TendonLengths,
    build_default_gripper,
    load_mesh,
    save_mesh,
)
from softgrasp.softbody.fem import (
    count_inverted,
    forces,
    hessian,
    total_energy,
)
from softgrasp.softbody.quasistatic import (
    QuasistaticResult,
    configuration_jacobian,
    solve_quasistatic,
)
from softgrasp.softbody.dynamics import (
    ContactParams,
    DampingParams,
    FreeBase,
    step_dynamic,
)

__all__ = [
    "MaterialParams",
    "SoftBodyMesh",
    "TendonLengths",
    "build_default_gripper",
    "load_mesh",
    "save_mesh",
    "count_inverted",
    "forces",
    "hessian",
    "total_energy",
    "QuasistaticResult",
    "configuration_jacobian",
    "solve_quasistatic",
    "ContactParams",
    "DampingParams",
    "FreeBase",
    "step_dynamic",
]
