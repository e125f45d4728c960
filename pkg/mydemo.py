import asyncio
import os

from dotenv import load_dotenv
from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.graph import graph
from onepoint_dsgt.persistence import read_json
from onepoint_dsgt.utils import configure_logging

load_dotenv(override=True)
configure_logging(os.getenv("ONEPOINT_DSGT_LOG_LEVEL", "INFO"))


async def main():
    """Run the synthetic logistic experiment through the pipeline and print its summary."""
    my_custom_params = {
        "parallel_runs": True,
        "max_parallel_runs": 4,
        "metrics_stride": 200,
    }
    run_config = RunnableConfig(configurable=my_custom_params)

    input_data = {
        "config": read_json("configs/logistic_synthetic.json"),
        "mode": "run",
        "reps_override": 4,
    }
    print("Running the experiment graph...")
    result = await graph.ainvoke(input_data, config=run_config)

    if result.get("errors"):
        print("Config rejected:")
        for message in result["errors"]:
            print(f"  {message}")
        return

    summary = result["summary"]
    print("\n--- Experiment finished ---")
    print(f"rho_w:          {summary['rho_w']:.4f}")
    print(f"fit window:     {summary['fit_window']}")
    print(f"slopes:         {summary['slopes']}")
    print(f"final metrics:  {summary['final']}")
    print(f"certificate:    {summary['certificate_verdict']}")


if __name__ == "__main__":
    asyncio.run(main())
