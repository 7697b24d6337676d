#!/usr/bin/env python3
"""Walk through the 64 prompt variants and render a few of them.

Every prompt carries the mandatory core directive (detail 2); the six
optional details switch a role persona, two extra instructions, and three
context blocks on or off.
"""

from reqimpact.corpus import ChangeRationale, Requirement
from reqimpact.prompts import enumerate_prompts, load_catalog, prompt_by_id, render_cag_prompt

specs = enumerate_prompts()
print(f"{len(specs)} prompt variants; the first, one middle, and the last:")
for spec in (specs[0], specs[29], specs[63]):
    print(f"  {spec.prompt_id}: details {spec.describe()}")

rationale = ChangeRationale(
    id="C1", text="Retire the nightly batch export in favor of streaming updates."
)
reqs = [
    Requirement(id="R1", text="The platform shall export account data nightly."),
    Requirement(id="R2", text="Dashboards shall refresh within one minute of a change."),
    Requirement(id="R3", text="Exports shall be retained for ninety days."),
]

catalog = load_catalog(domain="Billing")
print("\n--- P1 (directive only) " + "-" * 40)
print(render_cag_prompt(prompt_by_id("P1"), rationale, reqs, catalog))
print("\n--- P64 (everything on) " + "-" * 40)
print(render_cag_prompt(prompt_by_id("P64"), rationale, reqs, catalog))
