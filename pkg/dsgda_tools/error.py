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

# Exit statuses of the dsgda-lab command
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


class LabError(Exception):
    """Create generic dsgda-tools exception object"""

    def __init__(self, msg='Unknown error', code=EXIT_FAILURE):
        super().__init__(msg)
        self.code = code


class ConfigInvalid(LabError):
    """Config is invalid."""

    def __init__(self, msg, path=None, key=None, code=EXIT_CONFIG):
        self.path = path
        self.key = key
        self.reason = msg
        where = ' '.join(
            part for part in (
                f"file {path}" if path else None,
                f"key {key}" if key else None) if part)
        errmsg = f"Invalid configuration ({where}): {msg}" if where else (
            f"Invalid configuration: {msg}")
        super().__init__(errmsg, code)


class ConfigError(LabError):
    """Run configuration is inconsistent."""

    def __init__(self, msg, code=EXIT_CONFIG):
        super().__init__(msg, code)


class InvalidSize(LabError):
    """Agent count is not valid for the requested topology."""


class DegenerateSpectrum(LabError):
    """Spectral constant undefined at lambda 0 or 1."""

    def __init__(self, lambda_, code=EXIT_FAILURE):
        self.lambda_ = lambda_
        super().__init__(
            f"C_lambda is undefined for lambda={lambda_!r}", code)


class SaddleOutsideDomain(LabError):
    """Closed-form saddle point lies outside the domain balls."""


class ParseError(LabError):
    """Malformed LIBSVM record."""

    def __init__(self, line, column, reason, code=EXIT_FAILURE):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(
            f"Parse error at line {line}, column {column}: {reason}", code)


class InsufficientData(LabError):
    """Sample pool is too small."""


class EmptyReservoir(LabError):
    """No replacement samples available."""

    def __init__(self, msg='Replacement reservoir is empty',
                 code=EXIT_FAILURE):
        super().__init__(msg, code)


class MismatchedShapes(LabError):
    """Coupled inputs do not line up."""


class TooFewSeeds(LabError):
    """Not enough independent runs for an estimate."""

    def __init__(self, count, code=EXIT_FAILURE):
        super().__init__(
            f"At least 2 seeds are required, got {count}", code)


class EmptyGrid(LabError):
    """Probe grid or sample pool is empty."""


class ZeroModulus(LabError):
    """Strong-mode quantity requested with zero modulus."""


class MissingB(LabError):
    """Loss bound B required but not declared."""

    def __init__(self, msg='Loss bound B is required', code=EXIT_FAILURE):
        super().__init__(msg, code)


class BoundUndefined(LabError):
    """Bound convergence condition fails."""


class SchemaMismatch(LabError):
    """Report inputs do not share the expected columns."""


class InvariantViolation(LabError):
    """Numerical invariant does not hold."""

    def __init__(self, msg, code=EXIT_INVARIANT):
        super().__init__(msg, code)


class NotSymmetric(InvariantViolation):
    """Matrix is not symmetric."""


class DomainViolation(InvariantViolation):
    """Point lies outside the domain balls."""


class ConstantViolation(InvariantViolation):
    """Declared problem constant is violated."""

    def __init__(self, inequality, witness, code=EXIT_INVARIANT):
        self.inequality = inequality
        self.witness = witness
        super().__init__(
            f"Constant violated: {inequality} (witness {witness})", code)


class StepConditionViolated(InvariantViolation):
    """Step sizes are outside the contraction window."""


class InnerSolveFailed(InvariantViolation):
    """Inner sup/inf solver did not converge."""
