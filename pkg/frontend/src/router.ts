/** Hash routes: #/search, #/datasets, #/datasets/:id, #/datasources, #/datasources/:id. */

export interface Route {
  view: "search" | "datasets" | "dataset" | "datasources" | "datasource";
  id?: string;
}

export function parseHash(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  if (parts[0] === "datasets") {
    return parts[1] ? { view: "dataset", id: parts[1] } : { view: "datasets" };
  }
  if (parts[0] === "datasources") {
    return parts[1] ? { view: "datasource", id: parts[1] } : { view: "datasources" };
  }
  return { view: "search" };
}
