# Shared by the collection and inference prompts.
SPATIAL_RULES = """SPATIAL RULES:
- Use only the objects listed in the scene. Never invent objects, IDs, coordinates or sizes.
- Copy every coordinate and size exactly as listed and compute with those numbers only.
- Distances are measured between object centers on the floor plane: sqrt((x1 - x2)^2 + (y1 - y2)^2). Ignore height.
- Compare object sizes by volume: width x length x height.
- Left and right are judged by a viewer standing at the situation position and facing the anchor object.
  With viewer (vx, vy), anchor (ax, ay) and object (cx, cy), the object is on the left when
  (ax - vx) * (cy - ay) - (ay - vy) * (cx - ax) is positive and on the right when it is negative.
- The answer is always the ID of a listed object whose class matches the object named in the query."""
