# Copyright 2018 Red Hat, Inc.
# All Rights Reserved.
#
#    Licensed under the Apache License, Version 2.0 (the "License"); you may
#    not use this file except in compliance with the License. You may obtain
#    a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#    WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#    License for the specific language governing permissions and limitations
#    under the License.
#

TOPOLOGY_FULL = 'full'
TOPOLOGY_RING = 'ring'
TOPOLOGY_STAR = 'star'
TOPOLOGY_GRID = 'grid'
TOPOLOGY_EXP = 'exp'
TOPOLOGY_SINGLE = 'single'

TOPOLOGIES = (TOPOLOGY_FULL, TOPOLOGY_RING, TOPOLOGY_STAR, TOPOLOGY_GRID,
              TOPOLOGY_EXP, TOPOLOGY_SINGLE)

FAMILY_QUADRATIC = 'quadratic'
FAMILY_AUC = 'auc'
FAMILY_SINE = 'sine'

FAMILIES = (FAMILY_QUADRATIC, FAMILY_AUC, FAMILY_SINE)

# Convexity regime of each family
REGIME_SCSC = 'scsc'
REGIME_CC = 'cc'
REGIME_NCNC = 'ncnc'

SCHEDULE_FIXED = 'fixed'
SCHEDULE_DECAYING = 'decaying'

PERTURB_LAST = 'last'
PERTURB_RANDOM = 'random'

OUTPUT_FINAL = 'final'
OUTPUT_AVG_ITERATE = 'avg_iterate'

GAP_WEAK = 'weak'
GAP_STRONG = 'strong'

# Sweep axes in the order they vary in reports, slowest first
SWEEP_AXES = ('eta', 'topology', 'n', 'm')

# Tolerances shared by the numerical kernels
SYMMETRY_TOL = 1e-12
STOCHASTIC_TOL = 1e-12
DOMAIN_TOL = 1e-9
JACOBI_TOL = 1e-12
JACOBI_MAX_DIM = 4096

INNER_SOLVER_TOL = 1e-8
INNER_SOLVER_MAX_ITER = 100000
