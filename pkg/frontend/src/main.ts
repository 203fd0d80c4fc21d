/** Browser entry: mount the app against the server that served this page.
 *
 * Query parameters: ?participant=p1&api=http://host:port (api defaults to
 * the page's own origin).
 */

import { ApiClient } from "./api.js";
import { SurveyApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const participant = params.get("participant") ?? "p1";
const apiBase = params.get("api") ?? window.location.origin;

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

const app = new SurveyApp(root, new ApiClient(apiBase), participant);
void app.showDue();
