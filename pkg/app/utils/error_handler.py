from typing import Any, Dict

from app.utils.errors import (
    ConfigInvalid,
    DisbayesError,
    GraphError,
    ModelError,
    NoConvergence,
    NonIntegrable,
    NormalizerDivergence,
    NumericalFailure,
    ResultsIOError,
    SingularFisher,
)


class ErrorHandler:
    """Turn disbayes failures into messages for the terminal and the HTTP surface"""

    @staticmethod
    def format_config_error(error: ConfigInvalid) -> Dict[str, Any]:
        """Format configuration errors with one line per offending field"""
        return {
            "error_type": error.error_type,
            "title": "📝 Invalid Experiment Configuration",
            "message": error.message,
            "details": {"fields": list(error.field_errors)},
            "solutions": [
                "🔍 **Check the fields**: Every listed field names its TOML block and key",
                "📄 **Start from a template**: The files under configs/ are valid for every subcommand",
                "🔢 **Checkpoints**: They must be strictly increasing and no larger than run.t_max",
            ],
        }

    @staticmethod
    def format_numerical_error(error: NumericalFailure) -> Dict[str, Any]:
        """Format numerical failures with hints that depend on what failed"""
        if isinstance(error, NormalizerDivergence):
            title = "♾️ Belief Normalizer Diverged"
            solutions = [
                "📦 **Bound the parameter**: Use a uniform prior on a box",
                "🧮 **Switch representation**: Set model.representation = \"grid\"",
            ]
        elif isinstance(error, NoConvergence):
            title = "🔁 Newton Did Not Converge"
            solutions = [
                "⏳ **More data**: Separated logistic samples usually resolve at larger t",
                "🔓 **Relax the policy**: Set run.strict = false to record the status instead",
            ]
        elif isinstance(error, SingularFisher):
            title = "📐 Singular Fisher Information"
            solutions = [
                "🎯 **Check the estimate**: A boundary or separated estimate has no curvature",
                "🔓 **Relax the policy**: Set run.strict = false to skip the diagnostic",
            ]
        elif isinstance(error, NonIntegrable):
            title = "∫ Integration Failed"
            solutions = [
                "🎲 **Use Monte Carlo**: Pass method=\"mc\" for densities without closed forms",
                "🔢 **More points**: Raise DISBAYES_QUAD_POINTS",
            ]
        else:
            title = "⚠️ Numerical Failure"
            solutions = ["🔓 **Relax the policy**: Set run.strict = false to record failures as empty cells"]
        return {
            "error_type": error.error_type,
            "title": title,
            "message": error.message,
            "details": dict(error.details),
            "solutions": solutions,
        }

    @staticmethod
    def format_general_error(error: DisbayesError) -> Dict[str, Any]:
        """Format graph, model, belief and I/O errors"""
        if isinstance(error, ResultsIOError):
            title = "💾 Results Could Not Be Written"
            solutions = [
                "📁 **Check the directory**: --out must be writable",
                "🔄 **Resume**: Rerun with --resume to keep completed units",
            ]
        elif isinstance(error, GraphError):
            title = "🕸️ Invalid Communication Graph"
            solutions = [
                "🔗 **Connectivity**: Every agent must be reachable",
                "🔢 **Indices**: Agents are numbered from 0 to m - 1",
            ]
        elif isinstance(error, ModelError):
            title = "📊 Invalid Model"
            solutions = ["📏 **Scales**: Every sigma must be positive and finite"]
        else:
            title = "❌ Unexpected Error"
            solutions = ["📞 **Report**: If the issue persists, report it with the config file"]
        message = error.message if isinstance(error, DisbayesError) else str(error)
        return {
            "error_type": getattr(error, "error_type", "unknown_error"),
            "title": title,
            "message": message[:500] + "..." if len(message) > 500 else message,
            "details": dict(getattr(error, "details", {}) or {}),
            "solutions": solutions,
        }

    @classmethod
    def format_error(cls, error: DisbayesError) -> Dict[str, Any]:
        if isinstance(error, ConfigInvalid):
            return cls.format_config_error(error)
        if isinstance(error, NumericalFailure):
            return cls.format_numerical_error(error)
        return cls.format_general_error(error)

    @staticmethod
    def http_status(error: DisbayesError) -> int:
        if isinstance(error, ConfigInvalid):
            return 422
        if isinstance(error, NumericalFailure):
            return 500
        return 400

    @staticmethod
    def create_user_friendly_response(error_info: Dict[str, Any]) -> str:
        """Plain-text rendering for standard error"""
        response = f"{error_info['title']}\n\n"
        response += f"{error_info['message']}\n"

        details = error_info.get("details") or {}
        if details:
            response += "\nDetails:\n"
            for key, value in details.items():
                if isinstance(value, list):
                    for item in value:
                        response += f"  • {item}\n"
                else:
                    response += f"  • {key.replace('_', ' ').title()}: {value}\n"

        response += "\nSolutions:\n"
        for solution in error_info["solutions"]:
            response += f"  {solution}\n"
        return response
